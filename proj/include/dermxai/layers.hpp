#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dermxai/tensor.hpp"

namespace dermxai {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool operator==(const Shape&) const = default;
};

struct Param {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;
};

/// What a layer keeps from its forward pass for the backward pass.
struct LayerCache {
  Tensor input;
  Tensor output;
  std::vector<int> argmax;
  std::vector<double> mask;
};

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  /// `rng` is only consulted by stochastic layers in training mode.
  virtual Tensor forward(const Tensor& in, LayerCache& cache, bool training, std::mt19937_64* rng) const = 0;
  /// Returns dLoss/dInput and accumulates parameter gradients when asked.
  virtual Tensor backward(const Tensor& grad_out, const LayerCache& cache, bool accumulate) = 0;
  virtual std::vector<Param*> params() { return {}; }
  /// True for layers whose output is a spatial feature map suitable for CAM.
  virtual bool is_conv() const { return false; }

 private:
  std::string name_;
};

/// Square-kernel convolution with "same" padding and an optional fused ReLU.
class Conv2D final : public Layer {
 public:
  Conv2D(std::string name, int in_channels, int out_channels, int kernel, int stride, bool relu);
  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& in, LayerCache& cache, bool training, std::mt19937_64* rng) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, bool accumulate) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  bool is_conv() const override { return true; }
  void init(std::mt19937_64& rng);

 private:
  int in_, out_, k_, stride_, pad_;
  bool relu_;
  Param weight_;  // [out][in][ky][kx]
  Param bias_;
};

class MaxPool2D final : public Layer {
 public:
  explicit MaxPool2D(std::string name) : Layer(std::move(name)) {}
  std::string kind() const override { return "maxpool2d"; }
  Shape output_shape(const Shape& in) const override { return {in.channels, in.height / 2, in.width / 2}; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training, std::mt19937_64* rng) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, bool accumulate) override;
};

class GlobalAvgPool final : public Layer {
 public:
  explicit GlobalAvgPool(std::string name) : Layer(std::move(name)) {}
  std::string kind() const override { return "global_average_pool"; }
  Shape output_shape(const Shape& in) const override { return {in.channels, 1, 1}; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training, std::mt19937_64* rng) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, bool accumulate) override;
};

/// Fully connected layer over the flattened input.
class Dense final : public Layer {
 public:
  Dense(std::string name, int in_features, int out_features, bool relu);
  std::string kind() const override { return "dense"; }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& in, LayerCache& cache, bool training, std::mt19937_64* rng) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, bool accumulate) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  void init(std::mt19937_64& rng);
  int out_features() const { return out_; }

 private:
  int in_, out_;
  bool relu_;
  Param weight_;  // [out][in]
  Param bias_;
};

/// Inverted dropout: identity at inference, scaled Bernoulli mask in training.
class Dropout final : public Layer {
 public:
  Dropout(std::string name, double rate);
  std::string kind() const override { return "dropout"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& in, LayerCache& cache, bool training, std::mt19937_64* rng) const override;
  Tensor backward(const Tensor& grad_out, const LayerCache& cache, bool accumulate) override;
  double rate() const { return rate_; }

 private:
  double rate_;
};

class Sequential {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }
  const Layer& operator[](std::size_t i) const { return *layers_[i]; }

  /// When `caches` is non-null it is resized to one entry per layer.
  Tensor forward(const Tensor& in, std::vector<LayerCache>* caches, bool training, std::mt19937_64* rng) const;
  Tensor backward(const Tensor& grad_out, const std::vector<LayerCache>& caches, bool accumulate);
  std::vector<Param*> params();
  Shape output_shape(Shape in) const;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace dermxai
