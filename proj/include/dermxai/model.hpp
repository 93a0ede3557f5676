#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dermxai/augment.hpp"
#include "dermxai/image.hpp"
#include "dermxai/layers.hpp"
#include "dermxai/tensor.hpp"

namespace dermxai {

enum class BackboneId { kXception, kEfficientNetV2S, kInceptionResNetV2, kEfficientNetV2M, kToyCnn };

std::string_view backbone_name(BackboneId id);
/// Accepts "XCEPTION", "EFFICIENTNET_V2S", ... case-insensitively.
BackboneId backbone_from_name(std::string_view name);

enum class InputNormalization {
  kUnit,       // [0, 1] passed through
  kSymmetric,  // 2x - 1, i.e. [-1, 1]
  kByte,       // 255x, i.e. [0, 255]
};

std::string_view normalization_name(InputNormalization n);

/// Published facts about each backbone provider at a 224x224 input.
struct BackboneSpec {
  BackboneId id;
  std::string_view name;
  std::string_view last_conv_layer;
  int feature_channels;
  int feature_side;
  InputNormalization normalization;
  bool pretrained;
};

const BackboneSpec& backbone_spec(BackboneId id);

struct PlateauConfig {
  std::string monitor = "val_accuracy";
  int patience = 5;
  double factor = 0.1;
  double min_lr = 1e-6;
};

struct ModelConfig {
  BackboneId backbone = BackboneId::kToyCnn;
  int num_classes = 7;
  double dropout = 0.5;
  double learning_rate = 1e-3;
  int epochs = 1;
  int batch_size = 16;
  PlateauConfig lr_plateau;
  std::uint64_t seed = 0;
  bool freeze_backbone = false;
  int input_size = 224;
  /// Backbone weights (ONNX graph without classification top) for the
  /// pre-trained providers; unused for TOY_CNN.
  std::string backbone_weights;
  /// Overrides the default CAM target layer when non-empty.
  std::string cam_layer;
  AugmentationPolicy augmentation;

  /// Throws kInvalidArgument naming the first offending field.
  void validate() const;

  /// One row of the reference configuration table (dropout 0.5, lr 0.001,
  /// batch 16, per-backbone epoch budget).
  static ModelConfig reference(BackboneId id);
};

nlohmann::json config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown backbones are rejected.
ModelConfig config_from_json(const nlohmann::json& j);

struct LayerInfo {
  std::string name;
  std::string kind;
  Shape shape;
  bool spatial = false;
  bool default_cam_target = false;
};

/// Per-layer activation maps of one image, CHW.
using FeatureStack = Tensor;

/// The model surface the explainers and evaluation need. Classifiers built
/// here implement it; tests supply analytic models through it as well.
class ModelHandle {
 public:
  virtual ~ModelHandle() = default;

  virtual int num_classes() const = 0;
  /// Class probabilities (softmax output), inference mode.
  virtual std::vector<double> predict(const ImageTensor& image) const = 0;
  virtual std::vector<std::vector<double>> predict_batch(std::span<const ImageTensor> images) const;
  virtual bool supports_input_gradient() const = 0;
  /// d(class logit)/d(input pixel), HWC layout matching `image`.
  /// Throws kCapability when unsupported.
  virtual std::vector<double> input_gradient(const ImageTensor& image, int class_index) const = 0;
  virtual FeatureStack activations(const ImageTensor& image, std::string_view layer) const = 0;
  virtual std::vector<LayerInfo> layers(const ImageTensor& probe) const = 0;
};

/// Ordered layers with activation shapes for a probe image of side x side.
/// Exactly one spatial layer carries default_cam_target. Throws kData for a
/// model without layers.
std::vector<LayerInfo> list_layers(const ModelHandle& model, int side);
std::string default_cam_layer(const ModelHandle& model, int side);

class FeatureExtractor;

/// Backbone -> global average pool -> dense(128, ReLU) -> dropout -> dense(7).
class Classifier final : public ModelHandle {
 public:
  Classifier(ModelConfig config, std::unique_ptr<FeatureExtractor> backbone);
  ~Classifier() override;
  Classifier(const Classifier&) = delete;
  Classifier& operator=(const Classifier&) = delete;

  const ModelConfig& config() const { return config_; }

  int num_classes() const override { return config_.num_classes; }
  std::vector<double> predict(const ImageTensor& image) const override;
  bool supports_input_gradient() const override;
  std::vector<double> input_gradient(const ImageTensor& image, int class_index) const override;
  FeatureStack activations(const ImageTensor& image, std::string_view layer) const override;
  std::vector<LayerInfo> layers(const ImageTensor& probe) const override;

  /// Logits for a planar image with values in [0, 1].
  std::vector<double> logits(const Tensor& image, bool training = false, std::mt19937_64* rng = nullptr) const;
  /// d(logit[class_index])/d(image), CHW.
  Tensor logit_gradient(const Tensor& image, int class_index) const;

  /// Training-mode forward/backward of one sample; adds dLoss/dParam into the
  /// parameter gradients and returns the categorical cross-entropy.
  double accumulate_gradients(const Tensor& image, int label, std::mt19937_64& rng, int* predicted = nullptr);
  std::vector<Param*> trainable_params();
  std::vector<Param*> all_params();
  void zero_grad();

  InputNormalization normalization() const;
  int hidden_units() const { return 128; }
  int head_output_units() const;

  /// Writes weights.bin, checkpoint.json and (for providers) backbone.onnx.
  void save(const std::filesystem::path& dir, const nlohmann::json& extra) const;

 private:
  ModelConfig config_;
  std::unique_ptr<FeatureExtractor> backbone_;
  Sequential head_;
};

struct WeightsSource {
  /// Overrides config.backbone_weights when set.
  std::optional<std::filesystem::path> backbone_file;
};

/// Builds an untrained head on the chosen backbone. TOY_CNN is randomly
/// initialised from config.seed; providers load their ONNX graph. Throws
/// kInvalidArgument for bad configs and kData for weight/architecture mismatch.
std::unique_ptr<Classifier> build_classifier(const ModelConfig& config, const WeightsSource& weights = {});

/// Loads a checkpoint directory written by Classifier::save.
std::unique_ptr<Classifier> load_checkpoint(const std::filesystem::path& dir);
nlohmann::json read_checkpoint_info(const std::filesystem::path& dir);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace dermxai
