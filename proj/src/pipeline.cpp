#include "dermxai/pipeline.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "dermxai/archive.hpp"
#include "dermxai/error.hpp"
#include "dermxai/version.hpp"

namespace dermxai {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "file not found: " + file.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out) fail(ErrorCode::kIo, "cannot write " + file.string());
}

nlohmann::json read_json(const fs::path& file) {
  const std::string text = read_text(file);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, file.string() + ": " + e.what());
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string hex(const unsigned char* bytes, unsigned int n) {
  std::ostringstream os;
  for (unsigned int i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{bytes[i]};
  return os.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string hex_digest() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    EVP_DigestFinal_ex(ctx_, md, &n);
    return hex(md, n);
  }

 private:
  EVP_MD_CTX* ctx_;
};

void require_exists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) fail(ErrorCode::kNotFound, what + " not found: " + p.string());
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) fail(ErrorCode::kNotFound, what + " not found: " + p.string());
}

int workers_for(int requested) { return deterministic_mode() ? 1 : std::max(1, requested); }

}  // namespace

bool deterministic_mode() {
  const char* v = std::getenv("DERMXAI_DETERMINISTIC");
  return v != nullptr && std::string(v) != "0" && std::string(v) != "";
}

std::string sha256_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "file not found: " + file.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex_digest();
}

std::string sha256_text(const std::string& text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.hex_digest();
}

std::string config_digest(const nlohmann::json& config) { return sha256_text(config.dump()); }

OutputStage::OutputStage(fs::path target) : target_(std::move(target)) {
  const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
  fs::create_directories(parent);
  staging_ = parent / ("." + target_.filename().string() + ".staging-" + std::to_string(::getpid()));
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

OutputStage::~OutputStage() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void OutputStage::commit() {
  fs::create_directories(target_);
  for (const auto& entry : fs::directory_iterator(staging_)) {
    const fs::path dest = target_ / entry.path().filename();
    fs::remove_all(dest);
    fs::rename(entry.path(), dest);
  }
  fs::remove_all(staging_);
  committed_ = true;
}

void RunManifest::write(const fs::path& dir, const fs::path& final_dir) const {
  nlohmann::json artifacts = nlohmann::json::object();
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) artifacts[fs::relative(f, dir).generic_string()] = sha256_file(f);
  nlohmann::json j = {{"command", command},
                      {"config_digest", config_digest(config)},
                      {"config", config},
                      {"seeds", seeds},
                      {"inputs", inputs},
                      {"outputs", {{"dir", fs::absolute(final_dir).lexically_normal().string()}}},
                      {"started_at", started_at},
                      {"finished_at", utc_now()},
                      {"artifacts", artifacts},
                      {"notes", notes},
                      {"environment",
                       {{"library", std::string("dermxai ") + kVersion},
                        {"deterministic_mode", deterministic_mode()},
                        {"runtime", "single-process CPU; backbone providers via OpenCV DNN"}}}};
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

SplitManifest cmd_prepare(const PrepareOptions& o) {
  const std::string started = utc_now();
  require_exists(o.metadata_csv, "metadata file");
  require_dir(o.image_dir, "image directory");
  require(o.side > 0, "side must be positive");
  const auto records = parse_metadata(read_text(o.metadata_csv), o.image_dir);
  const auto manifest = stratified_split(records, o.ratios, o.seed);

  OutputStage stage(o.out_dir);
  if (o.metadata_only) {
    write_text(stage.dir() / "split.json", manifest_to_json(manifest).dump(2) + "\n");
  } else {
    export_archive(manifest, records, o.side, stage.dir(), workers_for(o.workers));
  }
  write_text(stage.dir() / "split_report.csv", split_report_csv(manifest));

  RunManifest run;
  run.command = "prepare";
  run.config = {{"side", o.side},
                {"ratios", {{"train", o.ratios.train}, {"val", o.ratios.val}, {"test", o.ratios.test}}},
                {"metadata_only", o.metadata_only},
                {"seed", o.seed}};
  run.seeds = {{"split", o.seed}};
  run.inputs = {{"metadata_csv", fs::absolute(o.metadata_csv).string()},
                {"metadata_sha256", sha256_file(o.metadata_csv)},
                {"image_dir", fs::absolute(o.image_dir).string()}};
  run.notes = {{"split_unit", "image_id (lesions with several images may straddle partitions)"},
               {"records", records.size()}};
  run.started_at = started;
  run.write(stage.dir(), o.out_dir);
  stage.commit();
  return manifest;
}

ModelConfig resolve_train_config(const TrainCommand& c) {
  nlohmann::json merged = read_json(c.config_file);
  if (!merged.is_object()) fail(ErrorCode::kParse, c.config_file.string() + ": expected a JSON object");
  merged.merge_patch(c.overrides);
  if (c.policy_file) merged["augmentation"] = read_json(*c.policy_file);
  ModelConfig config = config_from_json(merged);
  if (!config.backbone_weights.empty()) {
    fs::path w = config.backbone_weights;
    if (w.is_relative()) config.backbone_weights = (c.config_file.parent_path() / w).string();
  }
  config.validate();
  return config;
}

TrainingResult cmd_train(const TrainCommand& c) {
  const std::string started = utc_now();
  const ModelConfig config = resolve_train_config(c);
  require_dir(c.data_dir, "data directory");
  const auto train_file = archive_path(c.data_dir, Partition::kTrain);
  const auto val_file = archive_path(c.data_dir, Partition::kVal);
  require_exists(train_file, "training archive");
  require_exists(val_file, "validation archive");
  ArchiveImages train_set(train_file), val_set(val_file);
  for (const ArchiveImages* set : {&train_set, &val_set}) {
    if (set->reader().height() != config.input_size || set->reader().width() != config.input_size) {
      fail(ErrorCode::kData, "archive images are " + std::to_string(set->reader().height()) + "x" +
                                 std::to_string(set->reader().width()) + " but input_size is " +
                                 std::to_string(config.input_size) + " (prepare with --side " +
                                 std::to_string(config.input_size) + " or override input_size)");
    }
  }

  auto model = build_classifier(config);
  OutputStage stage(c.out_dir);
  TrainOptions options;
  options.checkpoint_dir = stage.dir() / "checkpoint";
  std::ofstream history(stage.dir() / "history.csv");
  history << history_csv({});
  history << std::setprecision(17);
  options.on_epoch = [&](const EpochStat& e) {
    history << e.epoch << ',' << e.train_loss << ',' << e.train_accuracy << ',' << e.val_loss << ','
            << e.val_accuracy << ',' << e.learning_rate << '\n';
    history.flush();
    if (c.on_epoch) c.on_epoch(e);
  };
  TrainingResult result = train(*model, train_set, val_set, config, options);
  history.close();
  if (!history) fail(ErrorCode::kIo, "cannot write history.csv");

  RunManifest run;
  run.command = "train";
  run.config = config_to_json(config);
  run.seeds = {{"model", config.seed}};
  run.inputs = {{"config_file", fs::absolute(c.config_file).string()},
                {"data_dir", fs::absolute(c.data_dir).string()},
                {"train_archive_sha256", sha256_file(train_file)},
                {"val_archive_sha256", sha256_file(val_file)}};
  const bool trainable_backbone = model->supports_input_gradient() && !config.freeze_backbone;
  run.notes = {{"optimizer",
                {{"name", "adam"},
                 {"beta1", options.adam.beta1},
                 {"beta2", options.adam.beta2},
                 {"epsilon", options.adam.epsilon}}},
               {"loss", "categorical cross-entropy, one-hot targets, no label smoothing or class weights"},
               {"input_normalization", normalization_name(model->normalization())},
               {"effective_freeze_backbone", !trainable_backbone},
               {"best_epoch", result.best_epoch},
               {"best_val_accuracy", result.history.empty() ? 0.0
                                                            : result.history[static_cast<std::size_t>(
                                                                  result.best_epoch - 1)].val_accuracy},
               {"epochs_run", result.history.size()}};
  if (!trainable_backbone && !config.freeze_backbone) {
    run.notes["freeze_note"] = "backbone runtime is inference-only; only the classifier head was trained";
  }
  run.started_at = started;
  run.write(stage.dir(), c.out_dir);
  stage.commit();
  result.best_checkpoint = c.out_dir / "checkpoint";
  return result;
}

ConfusionMatrix evaluate_confusion(const ModelHandle& model, const LabeledImages& data) {
  std::vector<int> truth, pred;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = model.predict(data.image(i));
    truth.push_back(data.label(i));
    pred.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
  }
  return confusion_matrix(truth, pred);
}

void write_confusion_png(const ConfusionMatrix& cm, const fs::path& file) {
  constexpr int kCell = 64, kMargin = 72;
  const int side = kMargin + kCell * kNumClasses;
  cv::Mat img(side, side, CV_8UC3, cv::Scalar(255, 255, 255));
  for (int t = 0; t < kNumClasses; ++t) {
    const double row = static_cast<double>(std::max<std::int64_t>(1, cm.row_sum(t)));
    for (int p = 0; p < kNumClasses; ++p) {
      const double frac = static_cast<double>(cm.counts[t][p]) / row;
      const auto rgb = colormap("hot", 1.0 - 0.85 * frac);
      const cv::Point tl(kMargin + p * kCell, kMargin + t * kCell);
      cv::rectangle(img, tl, tl + cv::Point(kCell - 1, kCell - 1),
                    cv::Scalar(rgb[2] * 255, rgb[1] * 255, rgb[0] * 255), cv::FILLED);
      cv::putText(img, std::to_string(cm.counts[t][p]), tl + cv::Point(8, kCell / 2 + 6), cv::FONT_HERSHEY_SIMPLEX,
                  0.5, frac > 0.5 ? cv::Scalar(255, 255, 255) : cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    }
    const std::string code(class_code(t));
    cv::putText(img, code, cv::Point(6, kMargin + t * kCell + kCell / 2 + 5), cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
    cv::putText(img, code, cv::Point(kMargin + t * kCell + 6, kMargin - 12), cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  }
  if (!cv::imwrite(file.string(), img)) fail(ErrorCode::kIo, "cannot write " + file.string());
}

ClassificationReport cmd_evaluate(const fs::path& checkpoint_dir, const fs::path& data_dir,
                                  const std::string& partition, const fs::path& out_dir) {
  const std::string started = utc_now();
  const Partition part = partition_from_name(partition);
  require_dir(checkpoint_dir, "checkpoint directory");
  const auto file = archive_path(data_dir, part);
  require_exists(file, std::string(partition_name(part)) + " archive");
  auto model = load_checkpoint(checkpoint_dir);
  ArchiveImages data(file);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.label(i) < 0 || data.label(i) >= model->num_classes()) {
      fail(ErrorCode::kData, "class-count mismatch: archive label " + std::to_string(data.label(i)) +
                                 " but checkpoint has " + std::to_string(model->num_classes()) + " classes");
    }
  }
  if (data.size() == 0) fail(ErrorCode::kData, "partition " + partition + " is empty");
  if (data.reader().height() != model->config().input_size || data.reader().width() != model->config().input_size) {
    fail(ErrorCode::kData, "archive images are " + std::to_string(data.reader().height()) + "x" +
                               std::to_string(data.reader().width()) + " but the checkpoint expects " +
                               std::to_string(model->config().input_size));
  }
  const ConfusionMatrix cm = evaluate_confusion(*model, data);
  const ClassificationReport report = weighted_report(cm);
  const std::string model_name(backbone_name(model->config().backbone));

  OutputStage stage(out_dir);
  nlohmann::json j = report_to_json(report);
  j["model"] = model_name;
  j["partition"] = partition_name(part);
  j["checkpoint"] = fs::absolute(checkpoint_dir).string();
  j["samples"] = cm.total();
  write_text(stage.dir() / "report.json", j.dump(2) + "\n");
  write_text(stage.dir() / "classification_report.csv", report_csv(report));
  write_text(stage.dir() / "summary.csv", summary_csv(report, model_name));
  write_text(stage.dir() / "confusion_matrix.csv", confusion_csv(cm));
  write_confusion_png(cm, stage.dir() / "confusion_matrix.png");

  RunManifest run;
  run.command = "evaluate";
  run.config = {{"partition", partition_name(part)}, {"model", config_to_json(model->config())}};
  run.seeds = {{"model", model->config().seed}};
  run.inputs = {{"checkpoint", fs::absolute(checkpoint_dir).string()},
                {"weights_sha256", sha256_file(checkpoint_dir / "weights.bin")},
                {"archive", fs::absolute(file).string()},
                {"archive_sha256", sha256_file(file)}};
  run.notes = {{"augmentation", "none (evaluation data is never augmented)"}};
  run.started_at = started;
  run.write(stage.dir(), out_dir);
  stage.commit();
  return report;
}

SaliencyMap cmd_explain(const ExplainCommand& c) {
  const SaliencyMethod method = method_from_name(c.method);
  require_dir(c.checkpoint_dir, "checkpoint directory");
  require_exists(c.image, "image");
  require(!c.out_png.empty(), "output path required");
  auto model = load_checkpoint(c.checkpoint_dir);
  const int side = model->config().input_size;
  const ImageTensor raw = read_image(c.image);
  const ImageTensor image = raw.height == side && raw.width == side ? raw : resize_bilinear(raw, side, side);
  const auto probs = model->predict(image);
  const int predicted = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());

  int target = predicted;
  if (c.target != "auto") {
    if (auto label = class_from_code(c.target)) {
      target = class_index(*label);
    } else {
      try {
        std::size_t used = 0;
        target = std::stoi(c.target, &used);
        if (used != c.target.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        fail(ErrorCode::kInvalidArgument, "unknown class " + c.target + " (use auto, a class code or an index)");
      }
      class_from_index(target);
    }
  }

  const nlohmann::json& p = c.params;
  SaliencyMap map;
  try {
    if (method == SaliencyMethod::kVanillaGrad) {
      map = vanilla_gradient(*model, image, target);
    } else if (method == SaliencyMethod::kSmoothGrad) {
      SmoothGradParams sg;
      sg.n_samples = p.value("n_samples", sg.n_samples);
      sg.noise_sigma = p.value("noise_sigma", sg.noise_sigma);
      sg.seed = p.value("seed", sg.seed);
      map = smoothgrad(*model, image, target, sg);
    } else {
      CamParams cam;
      cam.layer = p.value("layer", std::string());
      if (method == SaliencyMethod::kFasterScoreCam) cam.k_channels = kDefaultFasterChannels;
      if (p.contains("k_channels")) {
        const auto& k = p.at("k_channels");
        if (k.is_string() && k.get<std::string>() == "ALL") cam.k_channels.reset();
        else cam.k_channels = k.get<int>();
      }
      map = method == SaliencyMethod::kScoreCam ? score_cam(*model, image, target, cam)
                                                : faster_score_cam(*model, image, target, cam);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("explain params: ") + e.what());
  }
  map.source_image_id = c.image.stem().string();

  const double alpha = p.value("alpha", 0.5);
  const std::string cmap = p.value("colormap", std::string("jet"));
  const ImageTensor overlay = render_overlay(image, map, alpha, cmap);

  fs::path sidecar = c.out_png;
  sidecar.replace_extension(".json");
  OutputStage stage(c.out_png.parent_path().empty() ? fs::path(".") / ".explain" : c.out_png.parent_path() / ".explain");
  write_png(stage.dir() / c.out_png.filename(), overlay);
  nlohmann::json meta = saliency_sidecar(map, probs);
  meta["predicted_class"] = {{"index", predicted}, {"code", class_code(predicted)}};
  meta["checkpoint"] = fs::absolute(c.checkpoint_dir).string();
  meta["image"] = fs::absolute(c.image).string();
  meta["overlay"] = {{"alpha", alpha}, {"colormap", cmap}};
  meta["model"] = backbone_name(model->config().backbone);
  write_text(stage.dir() / sidecar.filename(), meta.dump(2) + "\n");
  const fs::path out_dir = c.out_png.parent_path().empty() ? fs::path(".") : c.out_png.parent_path();
  fs::create_directories(out_dir);
  fs::rename(stage.dir() / c.out_png.filename(), out_dir / c.out_png.filename());
  fs::rename(stage.dir() / sidecar.filename(), out_dir / sidecar.filename());
  return map;
}

std::vector<ReportRow> collect_reports(const std::vector<fs::path>& run_dirs) {
  std::vector<ReportRow> rows;
  for (const auto& dir : run_dirs) {
    fs::path file = dir / "report.json";
    if (!fs::exists(file)) file = dir / "evaluation" / "report.json";
    if (!fs::exists(file)) fail(ErrorCode::kNotFound, "no evaluation report in " + dir.string());
    const auto j = read_json(file);
    const auto report = report_from_json(j);
    ReportRow row;
    row.run = dir.lexically_normal().filename().string();
    if (row.run.empty()) row.run = dir.lexically_normal().parent_path().filename().string();
    row.model = j.value("model", row.run);
    row.accuracy = report.accuracy;
    row.precision = report.weighted.precision;
    row.recall = report.weighted.recall;
    row.f1 = report.weighted.f1;
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return a.run < b.run;
  });
  return rows;
}

std::vector<ReportRow> read_prior_work(const fs::path& csv) {
  std::istringstream in(read_text(csv));
  std::string line;
  std::vector<ReportRow> rows;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ReportRow r;
    std::string acc;
    std::getline(ls, r.run, ',');
    std::getline(ls, r.model, ',');
    std::getline(ls, acc, ',');
    try {
      r.accuracy = std::stod(acc);
    } catch (const std::exception&) {
      fail(ErrorCode::kParse, csv.string() + ": bad accuracy in line: " + line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v * 100.0 << '%';
  return os.str();
}

std::string two(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

std::string report_markdown(const std::vector<ReportRow>& rows, const std::vector<ReportRow>& prior) {
  std::ostringstream os;
  os << "| Run | Model | Accuracy | Precision | Recall | F1-Score |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.run << " | " << r.model << " | " << pct(r.accuracy) << " | " << two(r.precision) << " | "
       << two(r.recall) << " | " << two(r.f1) << " |\n";
  }
  for (const auto& r : prior) {
    os << "| " << r.run << " (reported) | " << r.model << " | " << pct(r.accuracy) << " | - | - | - |\n";
  }
  return os.str();
}

std::string report_csv_table(const std::vector<ReportRow>& rows, const std::vector<ReportRow>& prior) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "Run,Model,Accuracy,Precision,Recall,F1-Score\n";
  for (const auto& r : rows) {
    os << r.run << ',' << r.model << ',' << r.accuracy << ',' << r.precision << ',' << r.recall << ',' << r.f1 << '\n';
  }
  for (const auto& r : prior) os << r.run << " (reported)," << r.model << ',' << r.accuracy << ",,,\n";
  return os.str();
}

std::string cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_prefix,
                       const std::optional<fs::path>& prior_work) {
  require(!run_dirs.empty(), "report needs at least one run directory");
  const auto rows = collect_reports(run_dirs);
  const auto prior = prior_work ? read_prior_work(*prior_work) : std::vector<ReportRow>{};
  const std::string md = report_markdown(rows, prior);
  if (!out_prefix.empty()) {
    if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
    write_text(fs::path(out_prefix.string() + ".md"), md);
    write_text(fs::path(out_prefix.string() + ".csv"), report_csv_table(rows, prior));
  }
  return md;
}

}  // namespace dermxai
