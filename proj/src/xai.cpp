#include "dermxai/xai.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dermxai/error.hpp"
#include "dermxai/labels.hpp"
#include "dermxai/random.hpp"

namespace dermxai {

namespace {

constexpr std::array<std::string_view, 4> kMethodNames = {"vanilla_gradient", "smoothgrad", "score_cam",
                                                          "faster_score_cam"};

void require_gradients(const ModelHandle& model) {
  if (!model.supports_input_gradient()) {
    fail(ErrorCode::kCapability, "model runtime provides no input gradients; use score_cam or faster_score_cam");
  }
}

void require_class(const ModelHandle& model, int c) {
  require(c >= 0 && c < model.num_classes(), "target class out of range: " + std::to_string(c));
}

SaliencyMap gradient_map(const std::vector<double>& grad, const ImageTensor& image, SaliencyMethod method, int c) {
  SaliencyMap map;
  map.height = image.height;
  map.width = image.width;
  map.method = method;
  map.target_class = c;
  map.values = reduce_channels_abs_max(grad, image.height, image.width, image.channels);
  normalize_map(map);
  return map;
}

std::string resolve_layer(const ModelHandle& model, const ImageTensor& image, const std::string& layer) {
  return layer.empty() ? default_cam_layer(model, image.height) : layer;
}

}  // namespace

std::string_view method_name(SaliencyMethod m) { return kMethodNames[static_cast<std::size_t>(m)]; }

SaliencyMethod method_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == name) return static_cast<SaliencyMethod>(i);
  }
  fail(ErrorCode::kInvalidArgument, "unknown method " + std::string(name) +
                                        " (valid: vanilla_gradient, smoothgrad, score_cam, faster_score_cam)");
}

double SaliencyMap::max() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }
double SaliencyMap::min() const { return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end()); }

void normalize_map(SaliencyMap& map) {
  const double mx = map.max();
  if (!(mx > 0.0)) {
    std::fill(map.values.begin(), map.values.end(), 0.0);
    map.degenerate = true;
    return;
  }
  for (auto& v : map.values) v = std::max(v, 0.0) / mx;
  map.degenerate = false;
}

std::vector<double> reduce_channels_abs_max(const std::vector<double>& hwc, int height, int width, int channels) {
  require(hwc.size() == static_cast<std::size_t>(height) * width * channels, "gradient shape mismatch");
  std::vector<double> out(static_cast<std::size_t>(height) * width, 0.0);
  for (std::size_t p = 0; p < out.size(); ++p) {
    for (int c = 0; c < channels; ++c) out[p] = std::max(out[p], std::abs(hwc[p * channels + c]));
  }
  return out;
}

SaliencyMap vanilla_gradient(const ModelHandle& model, const ImageTensor& image, int target_class) {
  require_gradients(model);
  require_class(model, target_class);
  return gradient_map(model.input_gradient(image, target_class), image, SaliencyMethod::kVanillaGrad, target_class);
}

ImageTensor smoothgrad_perturbation(const ImageTensor& image, double sigma, std::mt19937_64& rng) {
  ImageTensor out = image;
  for (auto& v : out.values) {
    const double noisy = static_cast<double>(v) + sigma * standard_normal(rng);
    v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
  }
  return out;
}

std::vector<double> smoothgrad_mean_gradient(const ModelHandle& model, const ImageTensor& image, int target_class,
                                             const SmoothGradParams& params) {
  require(params.n_samples >= 1, "smoothgrad: n_samples must be at least 1");
  require(params.noise_sigma >= 0.0, "smoothgrad: noise_sigma must be nonnegative");
  require_gradients(model);
  require_class(model, target_class);
  std::mt19937_64 rng(params.seed);
  const double sigma = params.noise_sigma * 1.0;  // value range of [0, 1] images
  std::vector<double> mean;
  for (int i = 1; i <= params.n_samples; ++i) {
    const auto grad = model.input_gradient(smoothgrad_perturbation(image, sigma, rng), target_class);
    if (mean.empty()) {
      mean = grad;
      continue;
    }
    // Incremental mean: identical samples leave it bit-for-bit unchanged.
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += (grad[k] - mean[k]) / i;
  }
  return mean;
}

SaliencyMap smoothgrad(const ModelHandle& model, const ImageTensor& image, int target_class,
                       const SmoothGradParams& params) {
  auto map = gradient_map(smoothgrad_mean_gradient(model, image, target_class, params), image,
                          SaliencyMethod::kSmoothGrad, target_class);
  map.params = {{"n_samples", params.n_samples}, {"noise_sigma", params.noise_sigma}, {"seed", params.seed}};
  return map;
}

std::vector<double> channel_variances(const FeatureStack& acts) {
  std::vector<double> out(static_cast<std::size_t>(acts.channels), 0.0);
  const double n = static_cast<double>(acts.plane());
  for (int c = 0; c < acts.channels; ++c) {
    const auto ch = acts.channel(c);
    const double mean = std::accumulate(ch.begin(), ch.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : ch) ss += (v - mean) * (v - mean);
    out[static_cast<std::size_t>(c)] = ss / n;
  }
  return out;
}

std::vector<int> top_variance_channels(const FeatureStack& acts, int k) {
  require(k >= 1, "k_channels must be at least 1");
  const auto var = channel_variances(acts);
  std::vector<int> idx(var.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return var[a] > var[b]; });
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(k)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

SaliencyMap score_cam_channels(const ModelHandle& model, const ImageTensor& image, int target_class,
                               const std::string& layer, const std::vector<int>& channels) {
  require_class(model, target_class);
  const FeatureStack acts = model.activations(image, layer);
  if (acts.height * acts.width <= 1) {
    fail(ErrorCode::kInvalidArgument, "layer " + layer + " does not yield spatial activation maps");
  }
  std::vector<int> selected = channels;
  if (selected.empty()) {
    selected.resize(static_cast<std::size_t>(acts.channels));
    std::iota(selected.begin(), selected.end(), 0);
  }
  const int h = image.height, w = image.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  std::vector<std::vector<double>> upsampled;
  std::vector<ImageTensor> masked;
  upsampled.reserve(selected.size());
  masked.reserve(selected.size());
  for (int c : selected) {
    require(c >= 0 && c < acts.channels, "channel index out of range");
    auto up = resize_bilinear(acts.channel(c), acts.height, acts.width, h, w);
    const auto [lo_it, hi_it] = std::minmax_element(up.begin(), up.end());
    const double lo = *lo_it, span = *hi_it - *lo_it;
    ImageTensor m(h, w, image.channels);
    for (std::size_t p = 0; p < plane; ++p) {
      const double mask = span > 0.0 ? (up[p] - lo) / span : 0.0;
      for (int ch = 0; ch < image.channels; ++ch) {
        const std::size_t i = p * image.channels + ch;
        m.values[i] = static_cast<float>(image.values[i] * mask);
      }
    }
    upsampled.push_back(std::move(up));
    masked.push_back(std::move(m));
  }

  const double baseline = model.predict(ImageTensor(h, w, image.channels))[static_cast<std::size_t>(target_class)];
  const auto probs = model.predict_batch(masked);
  SaliencyMap map;
  map.height = h;
  map.width = w;
  map.method = SaliencyMethod::kScoreCam;
  map.target_class = target_class;
  map.values.assign(plane, 0.0);
  nlohmann::json scores = nlohmann::json::array();
  for (std::size_t k = 0; k < selected.size(); ++k) {
    const double score = probs[k][static_cast<std::size_t>(target_class)] - baseline;
    scores.push_back(score);
    for (std::size_t p = 0; p < plane; ++p) map.values[p] += score * upsampled[k][p];
  }
  for (auto& v : map.values) v = std::max(v, 0.0);
  normalize_map(map);
  map.params = {{"layer", layer}, {"channels", selected}, {"channel_scores", scores}, {"baseline_score", baseline}};
  return map;
}

SaliencyMap score_cam(const ModelHandle& model, const ImageTensor& image, int target_class, const CamParams& params) {
  const std::string layer = resolve_layer(model, image, params.layer);
  std::vector<int> channels;
  std::string warning;
  if (params.k_channels) {
    require(*params.k_channels >= 1, "k_channels must be at least 1");
    const int available = model.activations(image, layer).channels;
    int k = *params.k_channels;
    if (k > available) {
      warning = "k_channels " + std::to_string(k) + " clamped to " + std::to_string(available);
      k = available;
    }
    channels.resize(static_cast<std::size_t>(k));
    std::iota(channels.begin(), channels.end(), 0);
  }
  auto map = score_cam_channels(model, image, target_class, layer, channels);
  map.params["k_channels"] = params.k_channels ? nlohmann::json(*params.k_channels) : nlohmann::json("ALL");
  if (!warning.empty()) map.params["warning"] = warning;
  return map;
}

SaliencyMap faster_score_cam(const ModelHandle& model, const ImageTensor& image, int target_class,
                             const CamParams& params) {
  const std::string layer = resolve_layer(model, image, params.layer);
  std::vector<int> channels;
  std::string warning;
  if (params.k_channels) {
    const FeatureStack acts = model.activations(image, layer);
    if (*params.k_channels > acts.channels) {
      warning = "k_channels " + std::to_string(*params.k_channels) + " clamped to " + std::to_string(acts.channels);
    }
    channels = top_variance_channels(acts, *params.k_channels);
  }
  auto map = score_cam_channels(model, image, target_class, layer, channels);
  map.method = SaliencyMethod::kFasterScoreCam;
  map.params["k_channels"] = params.k_channels ? nlohmann::json(*params.k_channels) : nlohmann::json("ALL");
  if (!warning.empty()) map.params["warning"] = warning;
  return map;
}

std::array<double, 3> colormap(std::string_view name, double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto c01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  if (name == "jet") {
    return {c01(1.5 - std::abs(4.0 * t - 3.0)), c01(1.5 - std::abs(4.0 * t - 2.0)), c01(1.5 - std::abs(4.0 * t - 1.0))};
  }
  if (name == "hot") return {c01(3.0 * t), c01(3.0 * t - 1.0), c01(3.0 * t - 2.0)};
  if (name == "gray") return {t, t, t};
  fail(ErrorCode::kInvalidArgument, "unknown colormap " + std::string(name) + " (valid: jet, hot, gray)");
}

ImageTensor render_overlay(const ImageTensor& image, const SaliencyMap& map, double alpha,
                           std::string_view colormap_name) {
  require(image.height == map.height && image.width == map.width, "overlay: map and image shapes differ");
  require(image.channels == 3, "overlay: RGB image required");
  require(alpha >= 0.0 && alpha <= 1.0, "overlay: alpha must lie in [0, 1]");
  ImageTensor out(image.height, image.width, 3);
  for (std::size_t p = 0; p < map.values.size(); ++p) {
    const auto rgb = colormap(colormap_name, map.values[p]);
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = p * 3 + static_cast<std::size_t>(c);
      const double v = (1.0 - alpha) * image.values[i] + alpha * rgb[static_cast<std::size_t>(c)];
      out.values[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

nlohmann::json saliency_sidecar(const SaliencyMap& map, const std::vector<double>& probabilities) {
  nlohmann::json probs = nlohmann::json::object();
  for (std::size_t c = 0; c < probabilities.size() && c < kClassCodes.size(); ++c) {
    probs[std::string(kClassCodes[c])] = probabilities[c];
  }
  return {{"method", method_name(map.method)},
          {"params", map.params},
          {"target_class", {{"index", map.target_class}, {"code", class_code(map.target_class)}}},
          {"source_image_id", map.source_image_id},
          {"degenerate", map.degenerate},
          {"height", map.height},
          {"width", map.width},
          {"probabilities", probs}};
}

}  // namespace dermxai
