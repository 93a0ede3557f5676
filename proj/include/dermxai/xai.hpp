#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dermxai/image.hpp"
#include "dermxai/model.hpp"

namespace dermxai {

enum class SaliencyMethod { kVanillaGrad, kSmoothGrad, kScoreCam, kFasterScoreCam };

std::string_view method_name(SaliencyMethod m);
/// Accepts vanilla_gradient, smoothgrad, score_cam, faster_score_cam.
/// Throws kInvalidArgument listing the valid names otherwise.
SaliencyMethod method_from_name(std::string_view name);

struct SmoothGradParams {
  int n_samples = 25;
  double noise_sigma = 0.15;  // fraction of the [0, 1] value range
  std::uint64_t seed = 0;
};

inline constexpr int kDefaultFasterChannels = 16;

struct CamParams {
  std::string layer;  // empty selects the model's default CAM layer
  /// Channel budget; std::nullopt means ALL.
  std::optional<int> k_channels;
};

struct SaliencyMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major, in [0, 1]
  SaliencyMethod method = SaliencyMethod::kVanillaGrad;
  int target_class = 0;
  std::string source_image_id;
  nlohmann::json params = nlohmann::json::object();
  bool degenerate = false;  // all-zero map, left unnormalised

  double max() const;
  double min() const;
};

/// Divides by the maximum; an all-zero input is flagged degenerate instead.
void normalize_map(SaliencyMap& map);

/// max over RGB of |gradient|, HWC input.
std::vector<double> reduce_channels_abs_max(const std::vector<double>& hwc, int height, int width, int channels);

SaliencyMap vanilla_gradient(const ModelHandle& model, const ImageTensor& image, int target_class);

/// Perturbed copy image + N(0, sigma^2), clipped to [0, 1]. One call consumes
/// one draw per value from `rng`.
ImageTensor smoothgrad_perturbation(const ImageTensor& image, double sigma, std::mt19937_64& rng);

/// Running mean of the per-sample input gradients (HWC, signed), before
/// channel reduction and normalisation.
std::vector<double> smoothgrad_mean_gradient(const ModelHandle& model, const ImageTensor& image, int target_class,
                                             const SmoothGradParams& params);

SaliencyMap smoothgrad(const ModelHandle& model, const ImageTensor& image, int target_class,
                       const SmoothGradParams& params);

/// Population variance of each channel's activation map.
std::vector<double> channel_variances(const FeatureStack& activations);

/// Indices of the k highest-variance channels, returned in ascending channel
/// order (ties keep the lower index). k >= channel count returns all.
std::vector<int> top_variance_channels(const FeatureStack& activations, int k);

/// Score-CAM over the given channels of `layer` (all channels when `channels`
/// is empty). Uses forward passes only.
SaliencyMap score_cam_channels(const ModelHandle& model, const ImageTensor& image, int target_class,
                               const std::string& layer, const std::vector<int>& channels);

/// Baseline Score-CAM. A k_channels budget above the channel count is
/// clamped (recorded in params.warning); otherwise the first k channels are used.
SaliencyMap score_cam(const ModelHandle& model, const ImageTensor& image, int target_class, const CamParams& params);

/// Score-CAM restricted to the k channels with the largest spatial variance.
SaliencyMap faster_score_cam(const ModelHandle& model, const ImageTensor& image, int target_class,
                             const CamParams& params);

/// Named colormap gradient evaluated at t in [0, 1] -> RGB in [0, 1].
std::array<double, 3> colormap(std::string_view name, double t);

/// (1 - alpha) * image + alpha * colormap(map), clipped to [0, 1].
ImageTensor render_overlay(const ImageTensor& image, const SaliencyMap& map, double alpha,
                           std::string_view colormap_name = "jet");

nlohmann::json saliency_sidecar(const SaliencyMap& map, const std::vector<double>& probabilities);

}  // namespace dermxai
