#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dermxai/archive.hpp"
#include "dermxai/image.hpp"
#include "dermxai/model.hpp"

namespace dermxai {

struct EpochStat {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;  // rate used during this epoch
};

struct TrainingResult {
  std::vector<EpochStat> history;
  int best_epoch = 0;
  std::filesystem::path best_checkpoint;
  std::uint64_t seed = 0;
};

/// Random-access labelled image source.
class LabeledImages {
 public:
  virtual ~LabeledImages() = default;
  virtual std::size_t size() const = 0;
  virtual ImageTensor image(std::size_t i) const = 0;
  virtual int label(std::size_t i) const = 0;
};

class InMemoryImages final : public LabeledImages {
 public:
  InMemoryImages() = default;
  InMemoryImages(std::vector<ImageTensor> images, std::vector<int> labels);
  void add(ImageTensor image, int label);
  std::size_t size() const override { return images_.size(); }
  ImageTensor image(std::size_t i) const override { return images_.at(i); }
  int label(std::size_t i) const override { return labels_.at(i); }

 private:
  std::vector<ImageTensor> images_;
  std::vector<int> labels_;
};

class ArchiveImages final : public LabeledImages {
 public:
  explicit ArchiveImages(const std::filesystem::path& file) : reader_(file) {}
  std::size_t size() const override { return reader_.size(); }
  ImageTensor image(std::size_t i) const override { return reader_.image(i); }
  int label(std::size_t i) const override { return reader_.labels().at(i); }
  const ArchiveReader& reader() const { return reader_; }

 private:
  ArchiveReader reader_;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

struct TrainOptions {
  /// Best checkpoint directory; rewritten whenever val_accuracy improves.
  std::filesystem::path checkpoint_dir;
  AdamParams adam;
  std::function<void(const EpochStat&)> on_epoch;
};

/// New learning rate after the last epoch of `history`. The history is
/// replayed with a wait counter: an epoch whose val_accuracy strictly exceeds
/// the best so far resets it, any other epoch increments it, and reaching
/// `patience` triggers a reduction and restarts the counter (the best value is
/// kept). The rate is reduced only if that trigger lands on the last epoch:
/// max(current_lr * factor, min_lr).
double plateau_lr_step(std::span<const EpochStat> history, int patience, double factor, double min_lr,
                       double current_lr);

/// 1-based epoch with the highest val_accuracy; ties go to the earliest.
int select_best(std::span<const EpochStat> history);

/// Mean categorical cross-entropy and accuracy with dropout and augmentation off.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};
Evaluation evaluate(const Classifier& model, const LabeledImages& data);

/// Fine-tunes `model` with Adam on categorical cross-entropy. Training images
/// are augmented on the fly with config.augmentation; validation images never
/// are. The best checkpoint (strict val_accuracy improvement) is saved into
/// options.checkpoint_dir.
TrainingResult train(Classifier& model, const LabeledImages& train_set, const LabeledImages& val_set,
                     const ModelConfig& config, const TrainOptions& options);

std::string history_csv(std::span<const EpochStat> history);

}  // namespace dermxai
