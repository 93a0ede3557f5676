#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <opencv2/dnn.hpp>

#include "dermxai/layers.hpp"
#include "dermxai/model.hpp"

namespace dermxai {

/// Feature extractor underneath the classifier head. Inputs are planar and
/// already normalised for the backbone.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual Tensor forward(const Tensor& x, std::vector<LayerCache>* caches, bool training,
                         std::mt19937_64* rng) const = 0;
  virtual bool differentiable() const = 0;
  virtual Tensor backward(const Tensor& grad_out, const std::vector<LayerCache>& caches, bool accumulate) = 0;
  virtual std::vector<Param*> params() = 0;
  virtual std::vector<LayerInfo> layers(const Tensor& probe) const = 0;
  virtual Tensor activation(const Tensor& x, std::string_view layer) const = 0;
  virtual std::string default_cam_layer() const = 0;
  /// Source file to bundle into checkpoints; empty when weights live in weights.bin.
  virtual std::filesystem::path source_file() const { return {}; }
};

/// Three conv blocks: conv1 (3->8, stride 2) pool1 conv2 (8->16) pool2 conv3 (16->16).
class ToyCnnBackbone final : public FeatureExtractor {
 public:
  ToyCnnBackbone();
  void init(std::mt19937_64& rng);

  Tensor forward(const Tensor& x, std::vector<LayerCache>* caches, bool training,
                 std::mt19937_64* rng) const override;
  bool differentiable() const override { return true; }
  Tensor backward(const Tensor& grad_out, const std::vector<LayerCache>& caches, bool accumulate) override;
  std::vector<Param*> params() override { return net_.params(); }
  std::vector<LayerInfo> layers(const Tensor& probe) const override;
  Tensor activation(const Tensor& x, std::string_view layer) const override;
  std::string default_cam_layer() const override { return "conv3"; }

 private:
  Sequential net_;
};

/// Pre-trained backbone executed by OpenCV's DNN runtime. Forward-only: it
/// exposes activations for CAM methods but no input gradients, and its
/// weights are never updated.
class DnnBackbone final : public FeatureExtractor {
 public:
  DnnBackbone(const std::filesystem::path& onnx_file, std::string default_layer);

  Tensor forward(const Tensor& x, std::vector<LayerCache>* caches, bool training,
                 std::mt19937_64* rng) const override;
  bool differentiable() const override { return false; }
  Tensor backward(const Tensor& grad_out, const std::vector<LayerCache>& caches, bool accumulate) override;
  std::vector<Param*> params() override { return {}; }
  std::vector<LayerInfo> layers(const Tensor& probe) const override;
  Tensor activation(const Tensor& x, std::string_view layer) const override;
  std::string default_cam_layer() const override;
  std::filesystem::path source_file() const override { return file_; }

 private:
  Tensor run(const Tensor& x, const std::string& output) const;

  std::filesystem::path file_;
  std::string preferred_layer_;
  mutable std::mutex mutex_;
  mutable cv::dnn::Net net_;
};

}  // namespace dermxai
