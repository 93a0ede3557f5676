#include <doctest.h>

#include "dermxai/error.hpp"
#include "dermxai/xai.hpp"
#include "support/test_support.hpp"

using namespace dermxai;

namespace {

// logit_c = w_c . x; probabilities via softmax.
class LinearModel final : public ModelHandle {
 public:
  LinearModel(int h, int w) : h_(h), w_(w), weights_(7, std::vector<double>(static_cast<std::size_t>(h) * w * 3)) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n;
    for (auto& row : weights_) {
      for (auto& v : row) v = n(rng);
    }
  }
  int num_classes() const override { return 7; }
  std::vector<double> predict(const ImageTensor& image) const override {
    std::vector<double> logits(7, 0.0);
    for (int c = 0; c < 7; ++c) {
      for (std::size_t i = 0; i < image.size(); ++i) logits[c] += weights_[c][i] * image.values[i];
    }
    return softmax(logits);
  }
  bool supports_input_gradient() const override { return true; }
  std::vector<double> input_gradient(const ImageTensor&, int c) const override { return weights_[c]; }
  FeatureStack activations(const ImageTensor& image, std::string_view) const override {
    Tensor t(2, h_ / 2, w_ / 2);
    for (int y = 0; y < t.height; ++y) {
      for (int x = 0; x < t.width; ++x) {
        t.at(0, y, x) = image.at(2 * y, 2 * x, 0);
        t.at(1, y, x) = image.at(2 * y, 2 * x, 1);
      }
    }
    return t;
  }
  std::vector<LayerInfo> layers(const ImageTensor&) const override {
    return {{"features", "Linear", {2, h_ / 2, w_ / 2}, true, true}};
  }
  const std::vector<double>& weights(int c) const { return weights_[c]; }

 private:
  int h_, w_;
  std::vector<std::vector<double>> weights_;
};

void check_normalized(const SaliencyMap& m) {
  CHECK_FALSE(m.degenerate);
  CHECK(m.max() == 1.0);
  CHECK(m.min() >= 0.0);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("method names round-trip and unknown names list the valid ones") {
  for (auto m : {SaliencyMethod::kVanillaGrad, SaliencyMethod::kSmoothGrad, SaliencyMethod::kScoreCam,
                 SaliencyMethod::kFasterScoreCam}) {
    CHECK(method_from_name(method_name(m)) == m);
  }
  CHECK_THROWS_WITH_AS(method_from_name("gradcam"), doctest::Contains("faster_score_cam"), Error);
}

TEST_CASE("vanilla gradient of a linear model is |w| reduced over channels") {
  LinearModel model(6, 6);
  std::mt19937_64 rng(1);
  const auto map = vanilla_gradient(model, dxtest::random_image(6, 6, rng), 2);
  check_normalized(map);
  const auto& w = model.weights(2);
  double mx = 0;
  std::vector<double> want(36);
  for (std::size_t p = 0; p < 36; ++p) {
    want[p] = std::max({std::abs(w[3 * p]), std::abs(w[3 * p + 1]), std::abs(w[3 * p + 2])});
    mx = std::max(mx, want[p]);
  }
  for (auto& v : want) v /= mx;
  CHECK(max_abs_diff(map.values, want) < 1e-12);
  const auto sg = smoothgrad(model, dxtest::random_image(6, 6, rng), 2, {8, 0.3, 4});
  CHECK(max_abs_diff(sg.values, want) < 1e-12);
}

TEST_CASE("smoothgrad with zero noise equals the vanilla gradient") {
  auto model = build_classifier(dxtest::toy_config(24, 2));
  std::mt19937_64 rng(2);
  const auto img = dxtest::random_image(24, 24, rng);
  const auto v = vanilla_gradient(*model, img, 1);
  for (int n : {1, 5}) {
    const auto s = smoothgrad(*model, img, 1, {n, 0.0, 9});
    CHECK(max_abs_diff(s.values, v.values) <= 1e-6);
  }
}

TEST_CASE("smoothgrad with one sample equals the gradient at the perturbed point") {
  auto model = build_classifier(dxtest::toy_config(24, 2));
  std::mt19937_64 rng(3);
  const auto img = dxtest::random_image(24, 24, rng);
  const SmoothGradParams params{1, 0.2, 17};
  std::mt19937_64 noise(params.seed);
  const auto perturbed = smoothgrad_perturbation(img, params.noise_sigma, noise);
  CHECK(*std::min_element(perturbed.values.begin(), perturbed.values.end()) >= 0.0f);
  CHECK(*std::max_element(perturbed.values.begin(), perturbed.values.end()) <= 1.0f);
  const auto s = smoothgrad(*model, img, 0, params);
  const auto v = vanilla_gradient(*model, perturbed, 0);
  CHECK(max_abs_diff(s.values, v.values) <= 1e-6);
}

TEST_CASE("smoothgrad is reproducible from its seed") {
  auto model = build_classifier(dxtest::toy_config(16, 2));
  std::mt19937_64 rng(4);
  const auto img = dxtest::random_image(16, 16, rng);
  CHECK(smoothgrad(*model, img, 3, {4, 0.1, 5}).values == smoothgrad(*model, img, 3, {4, 0.1, 5}).values);
  CHECK(smoothgrad(*model, img, 3, {4, 0.1, 5}).values != smoothgrad(*model, img, 3, {4, 0.1, 6}).values);
}

TEST_CASE("faster score-cam with all channels equals score-cam") {
  auto model = build_classifier(dxtest::toy_config(32, 5));
  std::mt19937_64 rng(5);
  const auto img = dxtest::random_image(32, 32, rng);
  const auto a = score_cam(*model, img, 4, {});
  const auto b = faster_score_cam(*model, img, 4, {});
  CHECK(max_abs_diff(a.values, b.values) <= 1e-6);
  CHECK(a.params.at("k_channels") == "ALL");
}

TEST_CASE("score-cam matches the per-channel reference loop") {
  auto model = build_classifier(dxtest::toy_config(32, 6));
  std::mt19937_64 rng(6);
  for (int i = 0; i < 2; ++i) {
    const auto img = dxtest::random_image(32, 32, rng);
    const auto map = score_cam(*model, img, i, {});
    CHECK(max_abs_diff(map.values, dxtest::ref_score_cam(*model, img, i, "conv3")) <= 1e-6);
  }
}

TEST_CASE("faster score-cam uses the brute-force variance top-k subset") {
  auto model = build_classifier(dxtest::toy_config(32, 7));
  std::mt19937_64 rng(7);
  const auto img = dxtest::random_image(32, 32, rng);
  const auto acts = model->activations(img, "conv1");
  REQUIRE(acts.channels == 8);
  std::vector<std::pair<double, int>> ranked;
  for (int c = 0; c < acts.channels; ++c) {
    const auto ch = acts.channel(c);
    double mean = 0, var = 0;
    for (double v : ch) mean += v;
    mean /= static_cast<double>(ch.size());
    for (double v : ch) var += (v - mean) * (v - mean);
    ranked.emplace_back(-var / static_cast<double>(ch.size()), c);
  }
  std::stable_sort(ranked.begin(), ranked.end());
  std::vector<int> top;
  for (int k = 0; k < 4; ++k) top.push_back(ranked[static_cast<std::size_t>(k)].second);
  std::sort(top.begin(), top.end());
  CHECK(top_variance_channels(acts, 4) == top);
  const auto fast = faster_score_cam(*model, img, 2, {"conv1", 4});
  const auto subset = score_cam_channels(*model, img, 2, "conv1", top);
  CHECK(max_abs_diff(fast.values, subset.values) <= 1e-6);
}

TEST_CASE("a spatially constant channel ranks last") {
  Tensor t(3, 4, 4, 0.0);
  for (int i = 0; i < 16; ++i) {
    t.data[static_cast<std::size_t>(i)] = 2.0;
    t.data[16 + static_cast<std::size_t>(i)] = i % 3;
    t.data[32 + static_cast<std::size_t>(i)] = i % 2;
  }
  const auto v = channel_variances(t);
  CHECK(v[0] == 0.0);
  CHECK(top_variance_channels(t, 2) == std::vector<int>{1, 2});
  CHECK(top_variance_channels(t, 10) == std::vector<int>{0, 1, 2});
}

TEST_CASE("single-channel layer gives the normalised upsampled activation") {
  class OneChannel final : public ModelHandle {
   public:
    int num_classes() const override { return 7; }
    std::vector<double> predict(const ImageTensor& image) const override {
      double s = 0;
      for (float v : image.values) s += v;
      std::vector<double> logits(7, 0.0);
      logits[0] = s / static_cast<double>(image.size());
      return softmax(logits);
    }
    bool supports_input_gradient() const override { return false; }
    std::vector<double> input_gradient(const ImageTensor&, int) const override {
      fail(ErrorCode::kCapability, "no gradients");
    }
    FeatureStack activations(const ImageTensor&, std::string_view) const override {
      Tensor t(1, 2, 2);
      t.data = {0.0, 1.0, 2.0, 5.0};
      return t;
    }
    std::vector<LayerInfo> layers(const ImageTensor&) const override {
      return {{"f", "F", {1, 2, 2}, true, true}};
    }
  } model;
  ImageTensor img(8, 8, 3, 0.5f);
  const auto map = score_cam(model, img, 0, {});
  check_normalized(map);
  auto want = dxtest::ref_bilinear({0.0, 1.0, 2.0, 5.0}, 2, 2, 8, 8);
  const double mx = *std::max_element(want.begin(), want.end());
  for (auto& v : want) v /= mx;
  CHECK(max_abs_diff(map.values, want) <= 1e-12);
  CHECK_THROWS_AS(vanilla_gradient(model, img, 0), Error);
}

TEST_CASE("a constant model yields degenerate maps for every method") {
  dxtest::ConstantModel model;
  std::mt19937_64 rng(8);
  const auto img = dxtest::random_image(16, 16, rng);
  const SaliencyMap maps[] = {vanilla_gradient(model, img, 0), smoothgrad(model, img, 0, {3, 0.1, 1}),
                              score_cam(model, img, 0, {}), faster_score_cam(model, img, 0, {"", 2})};
  for (const auto& m : maps) {
    CHECK(m.degenerate);
    CHECK(m.max() == 0.0);
    CHECK(m.height == 16);
    CHECK(m.width == 16);
  }
}

TEST_CASE("channel budget above the channel count is clamped with a warning") {
  auto model = build_classifier(dxtest::toy_config(32, 9));
  std::mt19937_64 rng(9);
  const auto img = dxtest::random_image(32, 32, rng);
  const auto m = faster_score_cam(*model, img, 0, {"conv1", 50});
  CHECK(m.params.contains("warning"));
  CHECK(max_abs_diff(m.values, score_cam(*model, img, 0, {"conv1", std::nullopt}).values) <= 1e-6);
  CHECK_THROWS_AS(score_cam(*model, img, 0, {"logits", std::nullopt}), Error);
  CHECK_THROWS_AS(score_cam(*model, img, 9, {}), Error);
}

TEST_CASE("smoothgrad variance across seeds shrinks with the sample count") {
  auto model = build_classifier(dxtest::toy_config(16, 10));
  std::mt19937_64 rng(10);
  const auto img = dxtest::random_image(16, 16, rng);
  auto spread = [&](int n) {
    std::vector<std::vector<double>> runs;
    for (std::uint64_t s = 0; s < 8; ++s) runs.push_back(smoothgrad_mean_gradient(*model, img, 0, {n, 0.3, 100 + s}));
    double total = 0;
    for (std::size_t i = 0; i < runs[0].size(); ++i) {
      double mean = 0, var = 0;
      for (const auto& r : runs) mean += r[i];
      mean /= static_cast<double>(runs.size());
      for (const auto& r : runs) var += (r[i] - mean) * (r[i] - mean);
      total += var;
    }
    return total;
  };
  const double v1 = spread(1), v16 = spread(16), v64 = spread(64);
  CHECK(v16 < v1);
  CHECK(v64 < v16);
  CHECK(v64 < v1 / 8);
}

TEST_CASE("overlay blending endpoints") {
  std::mt19937_64 rng(11);
  const auto img = dxtest::random_image(5, 5, rng);
  SaliencyMap map;
  map.height = map.width = 5;
  map.values.assign(25, 0.0);
  map.values[7] = 1.0;
  CHECK(render_overlay(img, map, 0.0).values == img.values);
  const auto heat = render_overlay(img, map, 1.0, "jet");
  const auto hot = colormap("jet", 1.0);
  CHECK(heat.at(1, 2, 0) == doctest::Approx(hot[0]));
  const auto cold = colormap("jet", 0.0);
  const auto half = render_overlay(img, map, 0.5, "jet");
  CHECK(half.at(0, 0, 2) == doctest::Approx(0.5 * img.at(0, 0, 2) + 0.5 * cold[2]).epsilon(1e-6));
  SaliencyMap wrong = map;
  wrong.height = 4;
  CHECK_THROWS_AS(render_overlay(img, wrong, 0.5), Error);
  CHECK_THROWS_AS(colormap("viridis", 0.5), Error);
}

TEST_CASE("sidecar records method, params, target and probabilities") {
  auto model = build_classifier(dxtest::toy_config(16, 12));
  std::mt19937_64 rng(12);
  const auto img = dxtest::random_image(16, 16, rng);
  auto map = smoothgrad(*model, img, 5, {2, 0.1, 3});
  map.source_image_id = "ISIC_1";
  const auto j = saliency_sidecar(map, model->predict(img));
  CHECK(j.at("method") == "smoothgrad");
  CHECK(j.at("source_image_id") == "ISIC_1");
  CHECK(j.at("params").at("n_samples") == 2);
  CHECK(j.at("probabilities").size() == 7);
  CHECK(j.dump().find("VASC") != std::string::npos);
}
