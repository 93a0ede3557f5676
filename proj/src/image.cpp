#include "dermxai/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dermxai/error.hpp"

namespace dermxai {

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> taps(int src, int dst) {
  std::vector<Tap> out(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double pos = (i + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, src - 1);
    out[static_cast<std::size_t>(i)] = {lo, hi, pos - lo};
  }
  return out;
}

}  // namespace

template <typename T>
void resize_bilinear(std::span<const T> src, int src_h, int src_w, int channels, std::span<T> dst, int dst_h,
                     int dst_w) {
  require(src_h > 0 && src_w > 0 && dst_h > 0 && dst_w > 0, "resize: dimensions must be positive");
  require(src.size() == static_cast<std::size_t>(src_h) * src_w * channels, "resize: source size mismatch");
  require(dst.size() == static_cast<std::size_t>(dst_h) * dst_w * channels, "resize: destination size mismatch");
  const auto ys = taps(src_h, dst_h);
  const auto xs = taps(src_w, dst_w);
  for (int y = 0; y < dst_h; ++y) {
    const Tap& ty = ys[static_cast<std::size_t>(y)];
    for (int x = 0; x < dst_w; ++x) {
      const Tap& tx = xs[static_cast<std::size_t>(x)];
      for (int c = 0; c < channels; ++c) {
        auto px = [&](int yy, int xx) {
          return static_cast<double>(src[(static_cast<std::size_t>(yy) * src_w + xx) * channels + c]);
        };
        const double top = px(ty.lo, tx.lo) + (px(ty.lo, tx.hi) - px(ty.lo, tx.lo)) * tx.frac;
        const double bottom = px(ty.hi, tx.lo) + (px(ty.hi, tx.hi) - px(ty.hi, tx.lo)) * tx.frac;
        dst[(static_cast<std::size_t>(y) * dst_w + x) * channels + c] =
            static_cast<T>(top + (bottom - top) * ty.frac);
      }
    }
  }
}

template void resize_bilinear<float>(std::span<const float>, int, int, int, std::span<float>, int, int);
template void resize_bilinear<double>(std::span<const double>, int, int, int, std::span<double>, int, int);

ImageTensor resize_bilinear(const ImageTensor& image, int out_h, int out_w) {
  ImageTensor out(out_h, out_w, image.channels);
  resize_bilinear<float>(image.values, image.height, image.width, image.channels, out.values, out_h, out_w);
  return out;
}

std::vector<double> resize_bilinear(std::span<const double> plane, int src_h, int src_w, int out_h, int out_w) {
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
  resize_bilinear<double>(plane, src_h, src_w, 1, out, out_h, out_w);
  return out;
}

ImageTensor read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kIo, "image file not found: " + path.string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) fail(ErrorCode::kIo, "cannot decode image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  ImageTensor out(rgb.rows, rgb.cols, 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<unsigned char>(y);
    for (int i = 0; i < rgb.cols * 3; ++i) {
      out.values[static_cast<std::size_t>(y) * rgb.cols * 3 + i] = static_cast<float>(row[i]) / 255.0f;
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const ImageTensor& image) {
  require(image.channels == 3, "write_png: expected 3 channels");
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<unsigned char>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(y, x, c)), 0.0, 1.0);
        row[x * 3 + (2 - c)] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path.string(), bgr)) fail(ErrorCode::kIo, "cannot write image: " + path.string());
}

}  // namespace dermxai
