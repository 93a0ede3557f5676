#include "dermxai/model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "backbone.hpp"
#include "dermxai/error.hpp"
#include "dermxai/labels.hpp"
#include "dermxai/random.hpp"

namespace dermxai {

namespace {

constexpr std::array<BackboneSpec, 5> kBackbones = {{
    {BackboneId::kXception, "XCEPTION", "block14_sepconv2_act", 2048, 7, InputNormalization::kSymmetric, true},
    {BackboneId::kEfficientNetV2S, "EFFICIENTNET_V2S", "top_activation", 1280, 7, InputNormalization::kByte, true},
    {BackboneId::kInceptionResNetV2, "INCEPTION_RESNET_V2", "conv_7b_ac", 1536, 5, InputNormalization::kSymmetric,
     true},
    {BackboneId::kEfficientNetV2M, "EFFICIENTNET_V2M", "top_activation", 1280, 7, InputNormalization::kByte, true},
    {BackboneId::kToyCnn, "TOY_CNN", "conv3", 16, 28, InputNormalization::kUnit, false},
}};

constexpr char kWeightsMagic[8] = {'D', 'X', 'W', 'T', '0', '0', '0', '1'};
constexpr const char* kCheckpointFormat = "dermxai-checkpoint-1";

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

double normalization_scale(InputNormalization n) {
  switch (n) {
    case InputNormalization::kUnit: return 1.0;
    case InputNormalization::kSymmetric: return 2.0;
    case InputNormalization::kByte: return 255.0;
  }
  return 1.0;
}

double normalization_offset(InputNormalization n) { return n == InputNormalization::kSymmetric ? -1.0 : 0.0; }

void write_weights(const std::filesystem::path& file, const std::vector<Param*>& params) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + file.string());
  out.write(kWeightsMagic, sizeof(kWeightsMagic));
  const auto n = static_cast<std::uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const Param* p : params) {
    const auto len = static_cast<std::uint32_t>(p->name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(p->name.data(), len);
    const auto count = static_cast<std::uint64_t>(p->value.size());
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(count * sizeof(double)));
  }
  out.flush();
  if (!out) fail(ErrorCode::kIo, "write failed: " + file.string() + " (disk full?)");
}

void read_weights(const std::filesystem::path& file, const std::vector<Param*>& params) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "weights not found: " + file.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kWeightsMagic, sizeof(magic)) != 0) {
    fail(ErrorCode::kParse, "not a dermxai weights file: " + file.string());
  }
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (n != params.size()) {
    fail(ErrorCode::kData, "weight/architecture mismatch: file has " + std::to_string(n) + " tensors, model " +
                               std::to_string(params.size()));
  }
  for (Param* p : params) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || name != p->name || count != p->value.size()) {
      fail(ErrorCode::kData, "weight/architecture mismatch at " + p->name + " (file has " + name + ")");
    }
    in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(count * sizeof(double)));
  }
  if (!in) fail(ErrorCode::kParse, "truncated weights file: " + file.string());
}

}  // namespace

std::string_view backbone_name(BackboneId id) { return backbone_spec(id).name; }

BackboneId backbone_from_name(std::string_view name) {
  const std::string key = upper(name);
  for (const auto& b : kBackbones) {
    if (b.name == key) return b.id;
  }
  fail(ErrorCode::kInvalidArgument, "unknown backbone " + std::string(name));
}

const BackboneSpec& backbone_spec(BackboneId id) {
  for (const auto& b : kBackbones) {
    if (b.id == id) return b;
  }
  fail(ErrorCode::kInvalidArgument, "unknown backbone id");
}

std::string_view normalization_name(InputNormalization n) {
  switch (n) {
    case InputNormalization::kUnit: return "unit [0,1]";
    case InputNormalization::kSymmetric: return "symmetric [-1,1] (2x-1)";
    case InputNormalization::kByte: return "byte [0,255] (255x)";
  }
  return "?";
}

void ModelConfig::validate() const {
  require(num_classes == kNumClasses, "num_classes must be 7");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(epochs >= 1, "no training epochs");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(lr_plateau.monitor == "val_accuracy", "lr_plateau.monitor must be val_accuracy");
  require(lr_plateau.patience >= 1, "lr_plateau.patience must be at least 1");
  require(lr_plateau.factor > 0.0 && lr_plateau.factor < 1.0, "lr_plateau.factor must lie in (0, 1)");
  require(lr_plateau.min_lr >= 0.0 && lr_plateau.min_lr <= learning_rate,
          "lr_plateau.min_lr must lie in [0, learning_rate]");
  require(input_size >= 8, "input_size must be at least 8");
  augmentation.validate();
}

ModelConfig ModelConfig::reference(BackboneId id) {
  ModelConfig c;
  c.backbone = id;
  c.dropout = 0.5;
  c.learning_rate = 0.001;
  c.batch_size = 16;
  switch (id) {
    case BackboneId::kXception: c.epochs = 55; break;
    case BackboneId::kEfficientNetV2S: c.epochs = 50; break;
    case BackboneId::kInceptionResNetV2: c.epochs = 75; break;
    case BackboneId::kEfficientNetV2M: c.epochs = 80; break;
    case BackboneId::kToyCnn: c.epochs = 5; break;
  }
  return c;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"backbone", backbone_name(c.backbone)},
          {"num_classes", c.num_classes},
          {"dropout", c.dropout},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr_plateau",
           {{"monitor", c.lr_plateau.monitor},
            {"patience", c.lr_plateau.patience},
            {"factor", c.lr_plateau.factor},
            {"min_lr", c.lr_plateau.min_lr}}},
          {"seed", c.seed},
          {"freeze_backbone", c.freeze_backbone},
          {"input_size", c.input_size},
          {"backbone_weights", c.backbone_weights},
          {"cam_layer", c.cam_layer},
          {"augmentation", policy_to_json(c.augmentation)}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("backbone")) c.backbone = backbone_from_name(j.at("backbone").get<std::string>());
    c.num_classes = j.value("num_classes", c.num_classes);
    c.dropout = j.value("dropout", c.dropout);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("lr_plateau")) {
      const auto& p = j.at("lr_plateau");
      c.lr_plateau.monitor = p.value("monitor", c.lr_plateau.monitor);
      c.lr_plateau.patience = p.value("patience", c.lr_plateau.patience);
      c.lr_plateau.factor = p.value("factor", c.lr_plateau.factor);
      c.lr_plateau.min_lr = p.value("min_lr", c.lr_plateau.min_lr);
    }
    c.seed = j.value("seed", c.seed);
    c.freeze_backbone = j.value("freeze_backbone", c.freeze_backbone);
    c.input_size = j.value("input_size", c.input_size);
    c.backbone_weights = j.value("backbone_weights", c.backbone_weights);
    c.cam_layer = j.value("cam_layer", c.cam_layer);
    if (j.contains("augmentation")) c.augmentation = policy_from_json(j.at("augmentation"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("model config: ") + e.what());
  }
  return c;
}

std::vector<std::vector<double>> ModelHandle::predict_batch(std::span<const ImageTensor> images) const {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(predict(img));
  return out;
}

std::vector<LayerInfo> list_layers(const ModelHandle& model, int side) {
  auto layers = model.layers(ImageTensor(side, side, 3));
  if (layers.empty()) fail(ErrorCode::kData, "model has no layers");
  const bool flagged = std::any_of(layers.begin(), layers.end(), [](const LayerInfo& l) {
    return l.default_cam_target;
  });
  if (!flagged) {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
      if (it->spatial) {
        it->default_cam_target = true;
        break;
      }
    }
  }
  return layers;
}

std::string default_cam_layer(const ModelHandle& model, int side) {
  for (const auto& l : list_layers(model, side)) {
    if (l.default_cam_target) return l.name;
  }
  fail(ErrorCode::kData, "model has no spatial feature layer");
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : out) v /= sum;
  return out;
}

Classifier::Classifier(ModelConfig config, std::unique_ptr<FeatureExtractor> backbone)
    : config_(std::move(config)), backbone_(std::move(backbone)) {
  Tensor probe(3, config_.input_size, config_.input_size);
  const Tensor features = backbone_->forward(probe, nullptr, false, nullptr);
  const int feature_channels = features.channels;
  if (feature_channels <= 0) fail(ErrorCode::kData, "backbone produced no feature channels");
  head_.add(std::make_unique<GlobalAvgPool>("global_average_pool"));
  auto hidden = std::make_unique<Dense>("dense_128", feature_channels, 128, true);
  auto logits = std::make_unique<Dense>("logits", 128, config_.num_classes, false);
  std::mt19937_64 rng(derive_seed(config_.seed, 1));
  hidden->init(rng);
  logits->init(rng);
  head_.add(std::move(hidden));
  head_.add(std::make_unique<Dropout>("dropout", config_.dropout));
  head_.add(std::move(logits));
}

Classifier::~Classifier() = default;

InputNormalization Classifier::normalization() const { return backbone_spec(config_.backbone).normalization; }

int Classifier::head_output_units() const {
  return static_cast<const Dense&>(head_[head_.size() - 1]).out_features();
}

namespace {

Tensor normalized(const Tensor& x, InputNormalization n) {
  if (n == InputNormalization::kUnit) return x;
  Tensor out = x;
  const double scale = normalization_scale(n), offset = normalization_offset(n);
  for (auto& v : out.data) v = v * scale + offset;
  return out;
}

}  // namespace

std::vector<double> Classifier::logits(const Tensor& image, bool training, std::mt19937_64* rng) const {
  const Tensor features = backbone_->forward(normalized(image, normalization()), nullptr, training, rng);
  return head_.forward(features, nullptr, training, rng).data;
}

std::vector<double> Classifier::predict(const ImageTensor& image) const { return softmax(logits(to_planar(image))); }

bool Classifier::supports_input_gradient() const { return backbone_->differentiable(); }

Tensor Classifier::logit_gradient(const Tensor& image, int class_index) const {
  if (!backbone_->differentiable()) {
    fail(ErrorCode::kCapability,
         std::string(backbone_name(config_.backbone)) + " backbone runs inference-only; input gradients unavailable");
  }
  require(class_index >= 0 && class_index < config_.num_classes, "class index out of range");
  std::vector<LayerCache> backbone_cache, head_cache;
  const Tensor features = backbone_->forward(normalized(image, normalization()), &backbone_cache, false, nullptr);
  const Tensor out = head_.forward(features, &head_cache, false, nullptr);
  Tensor seed(out.channels, 1, 1);
  seed.data[static_cast<std::size_t>(class_index)] = 1.0;
  // Gradients flow through non-const layers but parameter grads stay untouched.
  auto& head = const_cast<Sequential&>(head_);
  Tensor g = backbone_->backward(head.backward(seed, head_cache, false), backbone_cache, false);
  const double scale = normalization_scale(normalization());
  if (scale != 1.0) {
    for (auto& v : g.data) v *= scale;
  }
  return g;
}

std::vector<double> Classifier::input_gradient(const ImageTensor& image, int class_index) const {
  return to_interleaved(logit_gradient(to_planar(image), class_index));
}

FeatureStack Classifier::activations(const ImageTensor& image, std::string_view layer) const {
  for (std::size_t i = 0; i < head_.size(); ++i) {
    if (head_[i].name() == layer) {
      fail(ErrorCode::kInvalidArgument, "layer " + std::string(layer) + " is not a spatial feature layer");
    }
  }
  return backbone_->activation(normalized(to_planar(image), normalization()), layer);
}

std::vector<LayerInfo> Classifier::layers(const ImageTensor& probe) const {
  auto out = backbone_->layers(to_planar(probe));
  const std::string wanted = config_.cam_layer.empty() ? backbone_->default_cam_layer() : config_.cam_layer;
  bool found = false;
  for (auto& l : out) {
    l.default_cam_target = l.spatial && l.name == wanted && !found;
    found = found || l.default_cam_target;
  }
  if (!found) {
    for (auto it = out.rbegin(); it != out.rend(); ++it) {
      if (it->spatial) {
        it->default_cam_target = true;
        break;
      }
    }
  }
  Shape s = out.empty() ? Shape{} : out.back().shape;
  for (std::size_t i = 0; i < head_.size(); ++i) {
    s = head_[i].output_shape(s);
    out.push_back({head_[i].name(), head_[i].kind(), s, false, false});
  }
  return out;
}

double Classifier::accumulate_gradients(const Tensor& image, int label, std::mt19937_64& rng, int* predicted) {
  require(label >= 0 && label < config_.num_classes, "label out of range");
  const bool train_backbone = !config_.freeze_backbone && backbone_->differentiable();
  std::vector<LayerCache> backbone_cache, head_cache;
  const Tensor features = backbone_->forward(normalized(image, normalization()),
                                             train_backbone ? &backbone_cache : nullptr, true, &rng);
  const Tensor out = head_.forward(features, &head_cache, true, &rng);
  const auto probs = softmax(out.data);
  if (predicted) {
    *predicted = static_cast<int>(std::max_element(out.data.begin(), out.data.end()) - out.data.begin());
  }
  const double mx = *std::max_element(out.data.begin(), out.data.end());
  double lse = 0.0;
  for (double v : out.data) lse += std::exp(v - mx);
  const double loss = -(out.data[static_cast<std::size_t>(label)] - mx - std::log(lse));
  Tensor d(out.channels, 1, 1);
  for (std::size_t i = 0; i < probs.size(); ++i) d.data[i] = probs[i] - (static_cast<int>(i) == label ? 1.0 : 0.0);
  const Tensor g = head_.backward(d, head_cache, true);
  if (train_backbone) backbone_->backward(g, backbone_cache, true);
  return loss;
}

std::vector<Param*> Classifier::trainable_params() {
  std::vector<Param*> out;
  if (!config_.freeze_backbone && backbone_->differentiable()) out = backbone_->params();
  for (Param* p : head_.params()) out.push_back(p);
  return out;
}

std::vector<Param*> Classifier::all_params() {
  std::vector<Param*> out = backbone_->params();
  for (Param* p : head_.params()) out.push_back(p);
  return out;
}

void Classifier::zero_grad() {
  for (Param* p : all_params()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

void Classifier::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
  std::filesystem::create_directories(dir);
  ModelConfig stored = config_;
  const auto source = backbone_->source_file();
  if (!source.empty()) {
    const auto target = dir / "backbone.onnx";
    std::error_code ec;
    if (!std::filesystem::equivalent(source, target, ec)) {
      std::filesystem::copy_file(source, target, std::filesystem::copy_options::overwrite_existing);
    }
    stored.backbone_weights = "backbone.onnx";
  }
  write_weights(dir / "weights.bin", const_cast<Classifier*>(this)->all_params());
  nlohmann::json info = extra.is_object() ? extra : nlohmann::json::object();
  info["format"] = kCheckpointFormat;
  info["config"] = config_to_json(stored);
  info["input_normalization"] = normalization_name(normalization());
  std::ofstream out(dir / "checkpoint.json", std::ios::trunc);
  out << info.dump(2) << '\n';
  if (!out) fail(ErrorCode::kIo, "cannot write checkpoint manifest in " + dir.string() + " (disk full?)");
}

std::unique_ptr<Classifier> build_classifier(const ModelConfig& config, const WeightsSource& weights) {
  config.validate();
  if (config.backbone == BackboneId::kToyCnn) {
    auto backbone = std::make_unique<ToyCnnBackbone>();
    std::mt19937_64 rng(derive_seed(config.seed, 0));
    backbone->init(rng);
    return std::make_unique<Classifier>(config, std::move(backbone));
  }
  std::filesystem::path file = weights.backbone_file ? *weights.backbone_file
                                                     : std::filesystem::path(config.backbone_weights);
  if (file.empty()) {
    fail(ErrorCode::kInvalidArgument, std::string(backbone_name(config.backbone)) +
                                          " needs pre-trained backbone weights (backbone_weights: ONNX graph)");
  }
  auto backbone =
      std::make_unique<DnnBackbone>(file, std::string(backbone_spec(config.backbone).last_conv_layer));
  ModelConfig effective = config;
  effective.backbone_weights = file.string();
  return std::make_unique<Classifier>(effective, std::move(backbone));
}

nlohmann::json read_checkpoint_info(const std::filesystem::path& dir) {
  const auto file = dir / "checkpoint.json";
  std::ifstream in(file);
  if (!in) fail(ErrorCode::kNotFound, "checkpoint not found: " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, "checkpoint manifest: " + std::string(e.what()));
  }
  if (j.value("format", "") != kCheckpointFormat) fail(ErrorCode::kParse, "unsupported checkpoint format");
  return j;
}

std::unique_ptr<Classifier> load_checkpoint(const std::filesystem::path& dir) {
  const auto info = read_checkpoint_info(dir);
  ModelConfig config = config_from_json(info.at("config"));
  WeightsSource source;
  if (config.backbone != BackboneId::kToyCnn) {
    std::filesystem::path w = config.backbone_weights;
    source.backbone_file = w.is_absolute() ? w : dir / w;
  }
  auto model = build_classifier(config, source);
  read_weights(dir / "weights.bin", model->all_params());
  return model;
}

}  // namespace dermxai
