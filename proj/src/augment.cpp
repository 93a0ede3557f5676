#include "dermxai/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dermxai/error.hpp"
#include "dermxai/random.hpp"

namespace dermxai {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Maps an out-of-range coordinate back into [0, n-1]; returns false when the
// fill mode wants the constant value instead.
bool resolve(double& v, int n, FillMode mode) {
  const double hi = n - 1;
  if (v >= 0.0 && v <= hi) return true;
  switch (mode) {
    case FillMode::kNearest:
      v = std::clamp(v, 0.0, hi);
      return true;
    case FillMode::kReflect: {
      if (n == 1) {
        v = 0.0;
        return true;
      }
      const double period = 2.0 * hi;
      v = std::fmod(std::abs(v), period);
      if (v > hi) v = period - v;
      return true;
    }
    case FillMode::kConstant:
      // Allow half a pixel of slack so edge pixels still interpolate.
      if (v > -0.5 && v < hi + 0.5) {
        v = std::clamp(v, 0.0, hi);
        return true;
      }
      return false;
  }
  return false;
}

}  // namespace

AugmentationPolicy AugmentationPolicy::none() {
  AugmentationPolicy p;
  p.rotation_max = p.shift_max = p.shear_max = p.zoom_max = 0.0;
  p.flip_horizontal = p.flip_vertical = false;
  return p;
}

void AugmentationPolicy::validate() const {
  require(rotation_max >= 0 && shift_max >= 0 && shear_max >= 0 && zoom_max >= 0,
          "augmentation magnitudes must be nonnegative");
  require(zoom_max < 1.0, "zoom_max must be < 1");
  require(fill_value >= 0.0f && fill_value <= 1.0f, "fill_value must lie in [0, 1]");
}

bool TransformSpec::has_affine() const {
  return rotation_deg != 0.0 || shift_x != 0.0 || shift_y != 0.0 || shear_deg != 0.0 || zoom != 1.0;
}

bool TransformSpec::is_identity() const { return !has_affine() && !flip_horizontal && !flip_vertical; }

TransformSpec sample_transform(const AugmentationPolicy& policy, std::mt19937_64& rng) {
  // Every draw is consumed regardless of the policy so streams stay aligned.
  TransformSpec t;
  t.rotation_deg = uniform(rng, -policy.rotation_max, policy.rotation_max);
  t.shift_x = uniform(rng, -policy.shift_max, policy.shift_max);
  t.shift_y = uniform(rng, -policy.shift_max, policy.shift_max);
  t.shear_deg = uniform(rng, -policy.shear_max, policy.shear_max);
  t.zoom = uniform(rng, 1.0 - policy.zoom_max, 1.0 + policy.zoom_max);
  const bool fh = uniform01(rng) < 0.5;
  const bool fv = uniform01(rng) < 0.5;
  t.flip_horizontal = policy.flip_horizontal && fh;
  t.flip_vertical = policy.flip_vertical && fv;
  // Normalise -0.0 so a zero policy compares equal to the identity spec.
  for (double* v : {&t.rotation_deg, &t.shift_x, &t.shift_y, &t.shear_deg}) {
    if (*v == 0.0) *v = 0.0;
  }
  return t;
}

ImageTensor flip_horizontal(const ImageTensor& image) {
  ImageTensor out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
  return out;
}

ImageTensor flip_vertical(const ImageTensor& image) {
  ImageTensor out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(image.height - 1 - y, x, c);
  return out;
}

ImageTensor apply_transform(const ImageTensor& image, const TransformSpec& spec, FillMode fill, float fill_value) {
  require(image.height == image.width, "apply_transform: square input required");
  ImageTensor cur = image;
  if (spec.flip_horizontal) cur = flip_horizontal(cur);
  if (spec.flip_vertical) cur = flip_vertical(cur);
  if (!spec.has_affine()) return cur;

  const int h = cur.height, w = cur.width, ch = cur.channels;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  // Forward map on centred coordinates: p' = Z * S * R * p + shift.
  const double ct = std::cos(spec.rotation_deg * kDeg), st = std::sin(spec.rotation_deg * kDeg);
  const double sh = std::tan(spec.shear_deg * kDeg);
  const double z = spec.zoom;
  // R = [[ct, -st], [st, ct]], S = [[1, sh], [0, 1]]; M = z * S * R.
  const double m00 = z * (ct + sh * st), m01 = z * (-st + sh * ct);
  const double m10 = z * st, m11 = z * ct;
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
  const double tx = spec.shift_x * w, ty = spec.shift_y * h;

  ImageTensor out(h, w, ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx - tx, dy = y - cy - ty;
      double sx = i00 * dx + i01 * dy + cx;
      double sy = i10 * dx + i11 * dy + cy;
      const bool inside = resolve(sx, w, fill) && resolve(sy, h, fill);
      for (int c = 0; c < ch; ++c) {
        if (!inside) {
          out.at(y, x, c) = fill_value;
          continue;
        }
        const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double fx = sx - x0, fy = sy - y0;
        const double top = cur.at(y0, x0, c) + (cur.at(y0, x1, c) - cur.at(y0, x0, c)) * fx;
        const double bot = cur.at(y1, x0, c) + (cur.at(y1, x1, c) - cur.at(y1, x0, c)) * fx;
        out.at(y, x, c) = static_cast<float>(std::clamp(top + (bot - top) * fy, 0.0, 1.0));
      }
    }
  }
  return out;
}

nlohmann::json policy_to_json(const AugmentationPolicy& p) {
  const char* mode = p.fill_mode == FillMode::kNearest   ? "nearest"
                     : p.fill_mode == FillMode::kReflect ? "reflect"
                                                         : "constant";
  return {{"rotation_max", p.rotation_max}, {"shift_max", p.shift_max},           {"shear_max", p.shear_max},
          {"zoom_max", p.zoom_max},         {"flip_horizontal", p.flip_horizontal}, {"flip_vertical", p.flip_vertical},
          {"fill_mode", mode},              {"fill_value", p.fill_value}};
}

AugmentationPolicy policy_from_json(const nlohmann::json& j) {
  AugmentationPolicy p;
  try {
    p.rotation_max = j.value("rotation_max", p.rotation_max);
    p.shift_max = j.value("shift_max", p.shift_max);
    p.shear_max = j.value("shear_max", p.shear_max);
    p.zoom_max = j.value("zoom_max", p.zoom_max);
    p.flip_horizontal = j.value("flip_horizontal", p.flip_horizontal);
    p.flip_vertical = j.value("flip_vertical", p.flip_vertical);
    p.fill_value = j.value("fill_value", p.fill_value);
    const auto mode = j.value("fill_mode", std::string("nearest"));
    if (mode == "nearest") p.fill_mode = FillMode::kNearest;
    else if (mode == "reflect") p.fill_mode = FillMode::kReflect;
    else if (mode == "constant") p.fill_mode = FillMode::kConstant;
    else fail(ErrorCode::kInvalidArgument, "unknown fill_mode " + mode);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("augmentation policy: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace dermxai
