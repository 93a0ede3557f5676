#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dermxai/dataset.hpp"
#include "dermxai/metrics.hpp"
#include "dermxai/model.hpp"
#include "dermxai/train.hpp"
#include "dermxai/xai.hpp"

namespace dermxai {

/// Set DERMXAI_DETERMINISTIC=1 to force single-worker execution.
bool deterministic_mode();

/// Hex SHA-256 of a file / string.
std::string sha256_file(const std::filesystem::path& file);
std::string sha256_text(const std::string& text);

/// Output directory that only appears once complete: files are written into
/// a hidden sibling staging directory and moved into place by commit().
/// Destroying an uncommitted stage removes everything it wrote.
class OutputStage {
 public:
  explicit OutputStage(std::filesystem::path target);
  ~OutputStage();
  OutputStage(const OutputStage&) = delete;
  OutputStage& operator=(const OutputStage&) = delete;

  const std::filesystem::path& dir() const { return staging_; }
  const std::filesystem::path& target() const { return target_; }
  void commit();

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

/// command, config digest, seeds, paths, timestamps and artifact checksums.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json notes = nlohmann::json::object();
  std::string started_at;

  /// Writes manifest.json into `dir`, checksumming every other file there.
  void write(const std::filesystem::path& dir, const std::filesystem::path& final_dir) const;
};

std::string config_digest(const nlohmann::json& config);

struct PrepareOptions {
  std::filesystem::path metadata_csv;
  std::filesystem::path image_dir;
  std::filesystem::path out_dir;
  std::uint64_t seed = 42;
  int side = 224;
  SplitRatios ratios;
  /// Split and report without decoding images or writing archives.
  bool metadata_only = false;
  int workers = 1;
};

SplitManifest cmd_prepare(const PrepareOptions& options);

struct TrainCommand {
  std::filesystem::path config_file;
  /// Flag-level overrides applied on top of the file.
  nlohmann::json overrides = nlohmann::json::object();
  std::optional<std::filesystem::path> policy_file;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::function<void(const EpochStat&)> on_epoch;
};

/// Parses, merges and validates the effective configuration without running
/// anything.
ModelConfig resolve_train_config(const TrainCommand& command);

TrainingResult cmd_train(const TrainCommand& command);

/// Class-probability argmax predictions of `model` over `data`.
ConfusionMatrix evaluate_confusion(const ModelHandle& model, const LabeledImages& data);

ClassificationReport cmd_evaluate(const std::filesystem::path& checkpoint_dir, const std::filesystem::path& data_dir,
                                  const std::string& partition, const std::filesystem::path& out_dir);

struct ExplainCommand {
  std::filesystem::path checkpoint_dir;
  std::filesystem::path image;
  std::string method = "faster_score_cam";
  std::string target = "auto";  // auto | class code | class index
  nlohmann::json params = nlohmann::json::object();
  std::filesystem::path out_png;
};

/// Writes the overlay PNG and a sidecar JSON next to it (same stem, .json).
SaliencyMap cmd_explain(const ExplainCommand& command);

/// Renders a confusion matrix as a labelled heatmap PNG.
void write_confusion_png(const ConfusionMatrix& cm, const std::filesystem::path& file);

struct ReportRow {
  std::string run;
  std::string model;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

/// Merges evaluation reports (report.json in each dir, or in dir/evaluation),
/// sorted by accuracy descending then run name. Writes <out_prefix>.csv and
/// <out_prefix>.md when out_prefix is non-empty; returns the Markdown table.
std::vector<ReportRow> collect_reports(const std::vector<std::filesystem::path>& run_dirs);
std::string report_markdown(const std::vector<ReportRow>& rows, const std::vector<ReportRow>& prior = {});
std::string report_csv_table(const std::vector<ReportRow>& rows, const std::vector<ReportRow>& prior = {});
/// Reads reported (never recomputed) prior-work rows: Source,Method,Accuracy.
std::vector<ReportRow> read_prior_work(const std::filesystem::path& csv);
std::string cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_prefix,
                       const std::optional<std::filesystem::path>& prior_work = std::nullopt);

}  // namespace dermxai
