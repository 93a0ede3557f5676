#pragma once

#include <random>

#include <nlohmann/json.hpp>

#include "dermxai/image.hpp"

namespace dermxai {

enum class FillMode { kNearest, kReflect, kConstant };

struct AugmentationPolicy {
  double rotation_max = 20.0;  // degrees
  double shift_max = 0.1;      // fraction of side
  double shear_max = 10.0;     // degrees
  double zoom_max = 0.1;       // zoom drawn from [1 - zoom_max, 1 + zoom_max]
  bool flip_horizontal = true;
  bool flip_vertical = true;
  FillMode fill_mode = FillMode::kNearest;
  float fill_value = 0.0f;  // used by kConstant, must lie in [0, 1]

  static AugmentationPolicy none();
  void validate() const;
};

struct TransformSpec {
  double rotation_deg = 0.0;
  double shift_x = 0.0;  // fraction of width, positive moves content right
  double shift_y = 0.0;  // fraction of height, positive moves content down
  double shear_deg = 0.0;
  double zoom = 1.0;  // > 1 magnifies
  bool flip_horizontal = false;
  bool flip_vertical = false;

  bool is_identity() const;
  bool has_affine() const;
};

TransformSpec sample_transform(const AugmentationPolicy& policy, std::mt19937_64& rng);

/// Flips, then rotation about the center, shear, zoom about the center and
/// shift. Pixels mapped from outside the frame are filled per `fill`.
ImageTensor apply_transform(const ImageTensor& image, const TransformSpec& spec, FillMode fill,
                            float fill_value = 0.0f);

ImageTensor flip_horizontal(const ImageTensor& image);
ImageTensor flip_vertical(const ImageTensor& image);

nlohmann::json policy_to_json(const AugmentationPolicy& policy);
AugmentationPolicy policy_from_json(const nlohmann::json& j);

}  // namespace dermxai
