#pragma once
// Shared fixtures and independent reference implementations for the tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "dermxai/image.hpp"
#include "dermxai/labels.hpp"
#include "dermxai/model.hpp"
#include "dermxai/train.hpp"

namespace dxtest {

inline std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("dermxai_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(DERMXAI_TEST_DATA) / name;
}

// HAM10000 class totals in canonical order.
inline constexpr std::array<int, 7> kHamTotals = {327, 514, 1099, 115, 1113, 6705, 142};
inline constexpr std::array<const char*, 7> kDx = {"akiec", "bcc", "bkl", "df", "mel", "nv", "vasc"};

// Metadata CSV with the given class totals; one row per image, lesions
// shared by consecutive pairs to mimic multi-image lesions.
inline std::string synthetic_metadata(const std::array<int, 7>& totals, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<int, int>> rows;  // class, serial
  int serial = 0;
  for (int c = 0; c < 7; ++c) {
    for (int i = 0; i < totals[static_cast<std::size_t>(c)]; ++i) rows.emplace_back(c, serial++);
  }
  std::shuffle(rows.begin(), rows.end(), rng);
  std::ostringstream os;
  os << "lesion_id,image_id,dx,dx_type,age,sex,localization\n";
  const char* sexes[] = {"male", "female", "unknown"};
  for (const auto& [c, s] : rows) {
    char image_id[32], lesion_id[32];
    std::snprintf(image_id, sizeof image_id, "ISIC_%07d", 24306 + s);
    std::snprintf(lesion_id, sizeof lesion_id, "HAM_%07d", s / 2);
    os << lesion_id << ',' << image_id << ',' << kDx[static_cast<std::size_t>(c)] << ",histo,"
       << (s % 9 == 0 ? std::string() : std::to_string(5 * (s % 17))) << ',' << sexes[s % 3] << ",back\n";
  }
  return os.str();
}

// Image whose colour statistics identify the class: a tinted background with
// a class-specific blob position plus noise.
inline dermxai::ImageTensor class_image(int cls, int side, std::mt19937_64& rng) {
  static const double tint[7][3] = {{0.8, 0.2, 0.2}, {0.2, 0.8, 0.2}, {0.2, 0.2, 0.8}, {0.8, 0.8, 0.2},
                                    {0.8, 0.2, 0.8}, {0.2, 0.8, 0.8}, {0.5, 0.5, 0.5}};
  std::normal_distribution<double> noise(0.0, 0.05);
  dermxai::ImageTensor img(side, side);
  const double cy = side * (0.3 + 0.05 * cls), cx = side * (0.7 - 0.05 * cls), r = side * 0.2;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const bool blob = (y - cy) * (y - cy) + (x - cx) * (x - cx) < r * r;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (blob ? 1.0 - tint[cls][ch] : tint[cls][ch]) + noise(rng);
        img.at(y, x, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

inline dermxai::ImageTensor random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  dermxai::ImageTensor img(h, w);
  for (auto& v : img.values) v = u(rng);
  return img;
}

inline dermxai::InMemoryImages balanced_set(int per_class, int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  dermxai::InMemoryImages set;
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < 7; ++c) set.add(class_image(c, side, rng), c);
  }
  return set;
}

inline dermxai::ModelConfig toy_config(int side = 32, std::uint64_t seed = 3) {
  auto c = dermxai::ModelConfig::reference(dermxai::BackboneId::kToyCnn);
  c.input_size = side;
  c.seed = seed;
  return c;
}

// ---- brute-force metrics oracle: per-sample loops, no confusion matrix ----
struct OracleReport {
  std::array<std::array<std::int64_t, 7>, 7> cm{};
  std::array<double, 7> precision{}, recall{}, f1{};
  std::array<std::int64_t, 7> support{};
  double accuracy = 0, w_precision = 0, w_recall = 0, w_f1 = 0;
};

inline OracleReport oracle_metrics(const std::vector<int>& t, const std::vector<int>& p) {
  OracleReport r;
  const std::size_t n = t.size();
  for (int a = 0; a < 7; ++a) {
    for (int b = 0; b < 7; ++b) {
      for (std::size_t i = 0; i < n; ++i) r.cm[a][b] += (t[i] == a && p[i] == b) ? 1 : 0;
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += t[i] == p[i] ? 1 : 0;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  for (int c = 0; c < 7; ++c) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += (t[i] == c && p[i] == c);
      fp += (t[i] != c && p[i] == c);
      fn += (t[i] == c && p[i] != c);
    }
    r.support[c] = tp + fn;
    r.precision[c] = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.recall[c] = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double s = r.precision[c] + r.recall[c];
    r.f1[c] = s == 0.0 ? 0.0 : 2.0 * r.precision[c] * r.recall[c] / s;
  }
  for (int c = 0; c < 7; ++c) {
    const double w = static_cast<double>(r.support[c]) / static_cast<double>(n);
    r.w_precision += w * r.precision[c];
    r.w_recall += w * r.recall[c];
    r.w_f1 += w * r.f1[c];
  }
  return r;
}

// ---- reference bilinear upsampling (half-pixel centres, edge clamp) ----
inline std::vector<double> ref_bilinear(const std::vector<double>& src, int sh, int sw, int dh, int dw) {
  std::vector<double> out(static_cast<std::size_t>(dh) * dw);
  auto px = [&](int y, int x) {
    y = std::clamp(y, 0, sh - 1);
    x = std::clamp(x, 0, sw - 1);
    return src[static_cast<std::size_t>(y) * sw + x];
  };
  for (int y = 0; y < dh; ++y) {
    for (int x = 0; x < dw; ++x) {
      double fy = std::max(0.0, (y + 0.5) * sh / dh - 0.5);
      double fx = std::max(0.0, (x + 0.5) * sw / dw - 0.5);
      const int y0 = static_cast<int>(std::floor(fy)), x0 = static_cast<int>(std::floor(fx));
      const double ay = fy - y0, ax = fx - x0;
      out[static_cast<std::size_t>(y) * dw + x] = (1 - ay) * ((1 - ax) * px(y0, x0) + ax * px(y0, x0 + 1)) +
                                                  ay * ((1 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1));
    }
  }
  return out;
}

// Unbatched Score-CAM: one forward per channel, written from the definition.
inline std::vector<double> ref_score_cam(const dermxai::ModelHandle& model, const dermxai::ImageTensor& image,
                                         int cls, const std::string& layer) {
  const auto acts = model.activations(image, layer);
  const int h = image.height, w = image.width;
  const double base = model.predict(dermxai::ImageTensor(h, w))[static_cast<std::size_t>(cls)];
  std::vector<double> cam(static_cast<std::size_t>(h) * w, 0.0);
  for (int c = 0; c < acts.channels; ++c) {
    std::vector<double> a(acts.channel(c).begin(), acts.channel(c).end());
    const auto up = ref_bilinear(a, acts.height, acts.width, h, w);
    const double lo = *std::min_element(up.begin(), up.end());
    const double hi = *std::max_element(up.begin(), up.end());
    dermxai::ImageTensor masked(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double m = hi > lo ? (up[static_cast<std::size_t>(y) * w + x] - lo) / (hi - lo) : 0.0;
        for (int ch = 0; ch < 3; ++ch) masked.at(y, x, ch) = static_cast<float>(image.at(y, x, ch) * m);
      }
    }
    const double score = model.predict(masked)[static_cast<std::size_t>(cls)] - base;
    for (std::size_t i = 0; i < cam.size(); ++i) cam[i] += score * up[i];
  }
  double mx = 0.0;
  for (auto& v : cam) mx = std::max(mx, v = std::max(v, 0.0));
  if (mx > 0.0) {
    for (auto& v : cam) v /= mx;
  }
  return cam;
}

// A model whose output ignores the input: uniform probabilities, zero
// gradients, non-trivial activations.
class ConstantModel final : public dermxai::ModelHandle {
 public:
  int num_classes() const override { return 7; }
  std::vector<double> predict(const dermxai::ImageTensor&) const override { return std::vector<double>(7, 1.0 / 7); }
  bool supports_input_gradient() const override { return true; }
  std::vector<double> input_gradient(const dermxai::ImageTensor& image, int) const override {
    return std::vector<double>(image.size(), 0.0);
  }
  dermxai::FeatureStack activations(const dermxai::ImageTensor& image, std::string_view) const override {
    dermxai::Tensor t(4, image.height / 4, image.width / 4);
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<double>((i * 7919) % 13);
    return t;
  }
  std::vector<dermxai::LayerInfo> layers(const dermxai::ImageTensor& probe) const override {
    return {{"features", "Const", {4, probe.height / 4, probe.width / 4}, true, true}};
  }
};

}  // namespace dxtest
