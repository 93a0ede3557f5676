#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace dermxai {

/// Interleaved (HWC) RGB image with float samples. Preprocessed images hold
/// values in [0, 1] before any backbone-specific normalization.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> values;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c), values(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t size() const { return values.size(); }
  float& at(int y, int x, int c) { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

/// Bilinear resampling with half-pixel centers and edge clamping, applied
/// independently to each of `channels` interleaved planes. Resizing to the
/// source size is an exact identity.
template <typename T>
void resize_bilinear(std::span<const T> src, int src_h, int src_w, int channels, std::span<T> dst, int dst_h,
                     int dst_w);

ImageTensor resize_bilinear(const ImageTensor& image, int out_h, int out_w);
std::vector<double> resize_bilinear(std::span<const double> plane, int src_h, int src_w, int out_h, int out_w);

/// Decodes any format OpenCV reads into RGB values in [0, 1].
/// Throws kIo when the file is missing or does not decode.
ImageTensor read_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG (values clipped to [0, 1], rounded to nearest).
void write_png(const std::filesystem::path& path, const ImageTensor& image);

}  // namespace dermxai
