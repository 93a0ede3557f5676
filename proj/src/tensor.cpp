#include "dermxai/tensor.hpp"

namespace dermxai {

Tensor to_planar(const ImageTensor& image) {
  Tensor t(image.channels, image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c) t.at(c, y, x) = image.at(y, x, c);
  return t;
}

ImageTensor to_image(const Tensor& t) {
  ImageTensor img(t.height, t.width, t.channels);
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x)
      for (int c = 0; c < t.channels; ++c) img.at(y, x, c) = static_cast<float>(t.at(c, y, x));
  return img;
}

std::vector<double> to_interleaved(const Tensor& t) {
  std::vector<double> out(t.size());
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x)
      for (int c = 0; c < t.channels; ++c)
        out[(static_cast<std::size_t>(y) * t.width + x) * t.channels + c] = t.at(c, y, x);
  return out;
}

}  // namespace dermxai
