#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dermxai/image.hpp"

namespace dermxai {

/// Planar (CHW) double-precision activation tensor for a single sample.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  double& at(int c, int y, int x) { return data[(c * plane()) + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const { return data[(c * plane()) + static_cast<std::size_t>(y) * width + x]; }
  std::span<const double> channel(int c) const { return {data.data() + c * plane(), plane()}; }
  std::span<double> channel(int c) { return {data.data() + c * plane(), plane()}; }
};

Tensor to_planar(const ImageTensor& image);
/// Inverse of to_planar; values converted to float.
ImageTensor to_image(const Tensor& planar);
/// Reorders a CHW tensor into an HWC vector (image layout) without narrowing.
std::vector<double> to_interleaved(const Tensor& planar);

}  // namespace dermxai
