// Command-line front end. Talks to the library only through dermxai.h.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dermxai/dermxai.h"

namespace {

int report_status(dx_status s) {
  if (s != DX_OK) std::fprintf(stderr, "error: %s\n", dx_last_error());
  return static_cast<int>(s);
}

void print_epoch(int epoch, double train_loss, double train_acc, double val_loss, double val_acc, double lr, void*) {
  std::printf("epoch %3d  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f  lr %.2e\n", epoch, train_loss, train_acc,
              val_loss, val_acc, lr);
  std::fflush(stdout);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dermoscopic lesion classification with saliency explanations"};
  app.set_version_flag("--version", std::string(dx_version()));
  app.require_subcommand(1);
  app.footer("Set DERMXAI_DETERMINISTIC=1 for single-threaded, bit-reproducible runs.");

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Split metadata and build resized tensor archives");
  std::string metadata, images, prep_out;
  std::uint64_t seed = 42;
  int side = 224, workers = 1;
  bool metadata_only = false;
  prepare->add_option("--metadata", metadata, "Metadata CSV (image_id, lesion_id, dx, ...)")->required();
  prepare->add_option("--images", images, "Directory holding <image_id>.jpg")->required();
  prepare->add_option("--out", prep_out, "Output directory")->required();
  prepare->add_option("--seed", seed, "Split seed")->capture_default_str();
  prepare->add_option("--side", side, "Resized image side")->capture_default_str()->check(CLI::PositiveNumber);
  prepare->add_option("--workers", workers, "Image decoding workers")->capture_default_str();
  prepare->add_flag("--metadata-only", metadata_only, "Write the split and report without decoding images");

  // train
  auto* train = app.add_subcommand("train", "Train a classifier on prepared archives");
  std::string config, policy, data, train_out, backbone, freeze;
  int epochs = 0, batch = 0, train_seed = -1, input_size = 0;
  double lr = 0.0, dropout = -1.0;
  bool dry_run = false;
  train->add_option("--config", config, "Model configuration JSON")->required();
  train->add_option("--data", data, "Directory from `prepare`");
  train->add_option("--out", train_out, "Run directory");
  train->add_option("--policy", policy, "Augmentation policy JSON");
  train->add_option("--backbone", backbone, "Override backbone");
  train->add_option("--epochs", epochs, "Override epochs");
  train->add_option("--batch-size", batch, "Override batch size");
  train->add_option("--learning-rate", lr, "Override learning rate");
  train->add_option("--dropout", dropout, "Override dropout rate");
  train->add_option("--seed", train_seed, "Override seed");
  train->add_option("--input-size", input_size, "Override input side (must match the archives)");
  train->add_option("--freeze-backbone", freeze, "Override freezing (true/false)");
  train->add_flag("--dry-run", dry_run, "Validate the configuration only");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on one partition");
  std::string checkpoint, eval_data, partition = "test", eval_out;
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  evaluate->add_option("--data", eval_data, "Directory from `prepare`")->required();
  evaluate->add_option("--partition", partition, "train, val or test")->capture_default_str();
  evaluate->add_option("--out", eval_out, "Output directory")->required();

  // explain
  auto* explain = app.add_subcommand("explain", "Render a saliency overlay for one image");
  std::string ex_checkpoint, ex_image, method = "faster_score_cam", target = "auto", params, ex_out;
  explain->add_option("--checkpoint", ex_checkpoint, "Checkpoint directory")->required();
  explain->add_option("--image", ex_image, "Input image")->required();
  explain->add_option("--method", method, "vanilla_gradient, smoothgrad, score_cam or faster_score_cam")
      ->capture_default_str();
  explain->add_option("--class", target, "auto, a class code or an index")->capture_default_str();
  explain->add_option("--params", params, "Method parameters as a JSON object");
  explain->add_option("--out", ex_out, "Output PNG")->required();

  // report
  auto* report = app.add_subcommand("report", "Merge evaluation reports into one table");
  std::vector<std::string> run_dirs;
  std::string prior, report_out;
  report->add_option("runs", run_dirs, "Run or evaluation directories")->required();
  report->add_option("--prior-work", prior, "CSV of reported prior-work accuracies");
  report->add_option("--out", report_out, "Output prefix for .md and .csv");

  CLI11_PARSE(app, argc, argv);

  if (*prepare) {
    return report_status(dx_prepare(metadata.c_str(), images.c_str(), prep_out.c_str(), seed, side,
                                     metadata_only ? 1 : 0, workers));
  }
  if (*train) {
    nlohmann::json overrides = nlohmann::json::object();
    if (!backbone.empty()) overrides["backbone"] = backbone;
    if (train->count("--epochs")) overrides["epochs"] = epochs;
    if (train->count("--batch-size")) overrides["batch_size"] = batch;
    if (train->count("--learning-rate")) overrides["learning_rate"] = lr;
    if (train->count("--dropout")) overrides["dropout"] = dropout;
    if (train->count("--seed")) overrides["seed"] = train_seed;
    if (train->count("--input-size")) overrides["input_size"] = input_size;
    if (!freeze.empty()) overrides["freeze_backbone"] = freeze == "true" || freeze == "1";
    const std::string ov = overrides.dump();
    if (dry_run) {
      const dx_status s = dx_validate_config(config.c_str(), ov.c_str(), opt(policy));
      if (s == DX_OK) std::printf("configuration ok\n");
      return report_status(s);
    }
    if (data.empty() || train_out.empty()) {
      std::fprintf(stderr, "error: --data and --out are required unless --dry-run is given\n");
      return DX_ERR_INVALID_ARGUMENT;
    }
    return report_status(
        dx_train(config.c_str(), ov.c_str(), opt(policy), data.c_str(), train_out.c_str(), print_epoch, nullptr));
  }
  if (*evaluate) {
    double acc = 0.0;
    const dx_status s = dx_evaluate(checkpoint.c_str(), eval_data.c_str(), partition.c_str(), eval_out.c_str(), &acc);
    if (s == DX_OK) std::printf("accuracy %.4f\n", acc);
    return report_status(s);
  }
  if (*explain) {
    return report_status(dx_explain(ex_checkpoint.c_str(), ex_image.c_str(), method.c_str(), target.c_str(),
                                    opt(params), ex_out.c_str()));
  }
  if (*report) {
    std::vector<const char*> dirs;
    for (const auto& d : run_dirs) dirs.push_back(d.c_str());
    std::vector<char> md(1 << 16);
    const dx_status s = dx_report(dirs.data(), dirs.size(), opt(prior), opt(report_out), md.data(), md.size());
    if (s == DX_OK) std::fputs(md.data(), stdout);
    return report_status(s);
  }
  return 0;
}
