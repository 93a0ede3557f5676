#include "backbone.hpp"

#include "dermxai/error.hpp"

namespace dermxai {

ToyCnnBackbone::ToyCnnBackbone() {
  net_.add(std::make_unique<Conv2D>("conv1", 3, 8, 3, 2, true));
  net_.add(std::make_unique<MaxPool2D>("pool1"));
  net_.add(std::make_unique<Conv2D>("conv2", 8, 16, 3, 1, true));
  net_.add(std::make_unique<MaxPool2D>("pool2"));
  net_.add(std::make_unique<Conv2D>("conv3", 16, 16, 3, 1, true));
}

void ToyCnnBackbone::init(std::mt19937_64& rng) {
  for (std::size_t i = 0; i < net_.size(); ++i) {
    if (auto* conv = dynamic_cast<Conv2D*>(&net_[i])) conv->init(rng);
  }
}

Tensor ToyCnnBackbone::forward(const Tensor& x, std::vector<LayerCache>* caches, bool training,
                               std::mt19937_64* rng) const {
  return net_.forward(x, caches, training, rng);
}

Tensor ToyCnnBackbone::backward(const Tensor& grad_out, const std::vector<LayerCache>& caches, bool accumulate) {
  return net_.backward(grad_out, caches, accumulate);
}

std::vector<LayerInfo> ToyCnnBackbone::layers(const Tensor& probe) const {
  std::vector<LayerInfo> out;
  Shape s{probe.channels, probe.height, probe.width};
  for (std::size_t i = 0; i < net_.size(); ++i) {
    s = net_[i].output_shape(s);
    out.push_back({net_[i].name(), net_[i].kind(), s, true, net_[i].name() == default_cam_layer()});
  }
  return out;
}

Tensor ToyCnnBackbone::activation(const Tensor& x, std::string_view layer) const {
  LayerCache cache;
  Tensor cur = x;
  for (std::size_t i = 0; i < net_.size(); ++i) {
    cur = net_[i].forward(cur, cache, false, nullptr);
    if (net_[i].name() == layer) return cur;
  }
  fail(ErrorCode::kInvalidArgument, "unknown layer " + std::string(layer));
}

DnnBackbone::DnnBackbone(const std::filesystem::path& onnx_file, std::string default_layer)
    : file_(onnx_file), preferred_layer_(std::move(default_layer)) {
  if (!std::filesystem::exists(onnx_file)) {
    fail(ErrorCode::kNotFound, "backbone weights not found: " + onnx_file.string());
  }
  try {
    net_ = cv::dnn::readNetFromONNX(onnx_file.string());
  } catch (const cv::Exception& e) {
    fail(ErrorCode::kData, "cannot load backbone " + onnx_file.string() + ": " + e.what());
  }
  if (net_.empty()) fail(ErrorCode::kData, "empty backbone graph: " + onnx_file.string());
  net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
  net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
}

Tensor DnnBackbone::run(const Tensor& x, const std::string& output) const {
  const int dims[4] = {1, x.channels, x.height, x.width};
  cv::Mat blob(4, dims, CV_32F);
  auto* p = blob.ptr<float>();
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = static_cast<float>(x.data[i]);
  cv::Mat out;
  {
    std::lock_guard lock(mutex_);
    try {
      net_.setInput(blob);
      out = output.empty() ? net_.forward() : net_.forward(output);
    } catch (const cv::Exception& e) {
      fail(ErrorCode::kData, "backbone forward failed: " + std::string(e.what()));
    }
    out = out.clone();
  }
  if (out.dims != 4 || out.size[0] != 1) {
    fail(ErrorCode::kData, "layer " + (output.empty() ? std::string("<output>") : output) +
                               " is not a spatial feature map (expected N x C x H x W)");
  }
  Tensor t(out.size[1], out.size[2], out.size[3]);
  const auto* q = out.ptr<float>();
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = q[i];
  return t;
}

Tensor DnnBackbone::forward(const Tensor& x, std::vector<LayerCache>* caches, bool, std::mt19937_64*) const {
  if (caches) caches->clear();
  return run(x, {});
}

Tensor DnnBackbone::backward(const Tensor&, const std::vector<LayerCache>&, bool) {
  fail(ErrorCode::kCapability, "backbone runtime provides no gradients");
}

std::vector<LayerInfo> DnnBackbone::layers(const Tensor& probe) const {
  std::vector<LayerInfo> out;
  std::lock_guard lock(mutex_);
  const auto names = net_.getLayerNames();
  std::vector<int> ids;
  std::vector<std::vector<cv::dnn::MatShape>> in_shapes, out_shapes;
  net_.getLayersShapes(cv::dnn::MatShape{1, probe.channels, probe.height, probe.width}, ids, in_shapes,
                       out_shapes);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] <= 0 || out_shapes[i].empty()) continue;  // id 0 is the input pseudo-layer
    const auto& s = out_shapes[i][0];
    const std::string name = net_.getLayer(ids[i])->name;
    LayerInfo info{name, net_.getLayer(ids[i])->type, {}, false, false};
    if (s.size() == 4) {
      info.shape = {s[1], s[2], s[3]};
      info.spatial = s[2] > 1 || s[3] > 1;
    } else if (s.size() == 2) {
      info.shape = {s[1], 1, 1};
    }
    out.push_back(std::move(info));
  }
  return out;
}

std::string DnnBackbone::default_cam_layer() const { return preferred_layer_; }

Tensor DnnBackbone::activation(const Tensor& x, std::string_view layer) const {
  return run(x, std::string(layer));
}

}  // namespace dermxai
