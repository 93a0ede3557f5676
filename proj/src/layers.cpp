#include "dermxai/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dermxai/error.hpp"
#include "dermxai/random.hpp"

namespace dermxai {

namespace {

void glorot_uniform(std::vector<double>& w, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : w) v = uniform(rng, -limit, limit);
}

// Range of output columns whose input column ox*stride + offset lies in [0, n).
std::pair<int, int> valid_range(int offset, int stride, int n, int out_n) {
  int lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  int hi = (n - 1 - offset) >= 0 ? (n - 1 - offset) / stride : -1;
  return {std::max(lo, 0), std::min(hi, out_n - 1)};
}

}  // namespace

Conv2D::Conv2D(std::string name, int in_channels, int out_channels, int kernel, int stride, bool relu)
    : Layer(std::move(name)), in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(kernel / 2),
      relu_(relu) {
  require(in_ > 0 && out_ > 0 && k_ > 0 && stride_ > 0, "conv2d: invalid geometry");
  const std::size_t n = static_cast<std::size_t>(out_) * in_ * k_ * k_;
  weight_ = {this->name() + "/kernel", std::vector<double>(n), std::vector<double>(n)};
  bias_ = {this->name() + "/bias", std::vector<double>(out_), std::vector<double>(out_)};
}

void Conv2D::init(std::mt19937_64& rng) {
  glorot_uniform(weight_.value, in_ * k_ * k_, out_ * k_ * k_, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Shape Conv2D::output_shape(const Shape& in) const {
  return {out_, (in.height + 2 * pad_ - k_) / stride_ + 1, (in.width + 2 * pad_ - k_) / stride_ + 1};
}

Tensor Conv2D::forward(const Tensor& in, LayerCache& cache, bool, std::mt19937_64*) const {
  require(in.channels == in_, name() + ": expected " + std::to_string(in_) + " input channels");
  const Shape os = output_shape({in.channels, in.height, in.width});
  Tensor out(os.channels, os.height, os.width);
  for (int oc = 0; oc < out_; ++oc) {
    auto dst = out.channel(oc);
    std::fill(dst.begin(), dst.end(), bias_.value[static_cast<std::size_t>(oc)]);
    for (int ic = 0; ic < in_; ++ic) {
      auto src = in.channel(ic);
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const double w = weight_.value[((static_cast<std::size_t>(oc) * in_ + ic) * k_ + ky) * k_ + kx];
          const auto [x_lo, x_hi] = valid_range(kx - pad_, stride_, in.width, os.width);
          for (int oy = 0; oy < os.height; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in.height) continue;
            double* drow = dst.data() + static_cast<std::size_t>(oy) * os.width;
            const double* srow = src.data() + static_cast<std::size_t>(iy) * in.width;
            const int shift = kx - pad_;
            for (int ox = x_lo; ox <= x_hi; ++ox) drow[ox] += w * srow[ox * stride_ + shift];
          }
        }
      }
    }
  }
  if (relu_) {
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  }
  cache.input = in;
  cache.output = out;
  return out;
}

Tensor Conv2D::backward(const Tensor& grad_out, const LayerCache& cache, bool accumulate) {
  const Tensor& in = cache.input;
  Tensor g = grad_out;
  if (relu_) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (cache.output.data[i] <= 0.0) g.data[i] = 0.0;
    }
  }
  Tensor grad_in(in.channels, in.height, in.width);
  for (int oc = 0; oc < out_; ++oc) {
    auto gplane = g.channel(oc);
    if (accumulate) {
      double s = 0.0;
      for (double v : gplane) s += v;
      bias_.grad[static_cast<std::size_t>(oc)] += s;
    }
    for (int ic = 0; ic < in_; ++ic) {
      auto src = in.channel(ic);
      auto gin = grad_in.channel(ic);
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const std::size_t widx = ((static_cast<std::size_t>(oc) * in_ + ic) * k_ + ky) * k_ + kx;
          const double w = weight_.value[widx];
          const auto [x_lo, x_hi] = valid_range(kx - pad_, stride_, in.width, g.width);
          double gw = 0.0;
          for (int oy = 0; oy < g.height; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= in.height) continue;
            const double* grow = gplane.data() + static_cast<std::size_t>(oy) * g.width;
            const std::size_t base = static_cast<std::size_t>(iy) * in.width;
            const double* srow = src.data() + base;
            double* girow = gin.data() + base;
            const int shift = kx - pad_;
            for (int ox = x_lo; ox <= x_hi; ++ox) {
              gw += grow[ox] * srow[ox * stride_ + shift];
              girow[ox * stride_ + shift] += w * grow[ox];
            }
          }
          if (accumulate) weight_.grad[widx] += gw;
        }
      }
    }
  }
  return grad_in;
}

Tensor MaxPool2D::forward(const Tensor& in, LayerCache& cache, bool, std::mt19937_64*) const {
  const Shape os = output_shape({in.channels, in.height, in.width});
  require(os.height > 0 && os.width > 0, name() + ": input too small to pool");
  Tensor out(os.channels, os.height, os.width);
  cache.argmax.assign(out.size(), 0);
  for (int c = 0; c < os.channels; ++c) {
    for (int y = 0; y < os.height; ++y) {
      for (int x = 0; x < os.width; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int iy = 2 * y + dy, ix = 2 * x + dx;
            const double v = in.at(c, iy, ix);
            if (v > best) {
              best = v;
              arg = static_cast<int>(c * in.plane() + static_cast<std::size_t>(iy) * in.width + ix);
            }
          }
        }
        const std::size_t o = c * out.plane() + static_cast<std::size_t>(y) * os.width + x;
        out.data[o] = best;
        cache.argmax[o] = arg;
      }
    }
  }
  cache.input = Tensor(in.channels, in.height, in.width);
  return out;
}

Tensor MaxPool2D::backward(const Tensor& grad_out, const LayerCache& cache, bool) {
  Tensor grad_in(cache.input.channels, cache.input.height, cache.input.width);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    grad_in.data[static_cast<std::size_t>(cache.argmax[i])] += grad_out.data[i];
  }
  return grad_in;
}

Tensor GlobalAvgPool::forward(const Tensor& in, LayerCache& cache, bool, std::mt19937_64*) const {
  Tensor out(in.channels, 1, 1);
  for (int c = 0; c < in.channels; ++c) {
    double s = 0.0;
    for (double v : in.channel(c)) s += v;
    out.data[static_cast<std::size_t>(c)] = s / static_cast<double>(in.plane());
  }
  cache.input = Tensor(in.channels, in.height, in.width);
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, const LayerCache& cache, bool) {
  Tensor grad_in(cache.input.channels, cache.input.height, cache.input.width);
  const double scale = 1.0 / static_cast<double>(grad_in.plane());
  for (int c = 0; c < grad_in.channels; ++c) {
    auto plane = grad_in.channel(c);
    std::fill(plane.begin(), plane.end(), grad_out.data[static_cast<std::size_t>(c)] * scale);
  }
  return grad_in;
}

Dense::Dense(std::string name, int in_features, int out_features, bool relu)
    : Layer(std::move(name)), in_(in_features), out_(out_features), relu_(relu) {
  require(in_ > 0 && out_ > 0, "dense: invalid size");
  const std::size_t n = static_cast<std::size_t>(in_) * out_;
  weight_ = {this->name() + "/kernel", std::vector<double>(n), std::vector<double>(n)};
  bias_ = {this->name() + "/bias", std::vector<double>(out_), std::vector<double>(out_)};
}

void Dense::init(std::mt19937_64& rng) {
  glorot_uniform(weight_.value, in_, out_, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Shape Dense::output_shape(const Shape& in) const {
  require(in.channels * in.height * in.width == in_, name() + ": input size mismatch");
  return {out_, 1, 1};
}

Tensor Dense::forward(const Tensor& in, LayerCache& cache, bool, std::mt19937_64*) const {
  require(static_cast<int>(in.size()) == in_, name() + ": expected " + std::to_string(in_) + " inputs");
  Tensor out(out_, 1, 1);
  for (int o = 0; o < out_; ++o) {
    const double* w = weight_.value.data() + static_cast<std::size_t>(o) * in_;
    double s = bias_.value[static_cast<std::size_t>(o)];
    for (int i = 0; i < in_; ++i) s += w[i] * in.data[static_cast<std::size_t>(i)];
    out.data[static_cast<std::size_t>(o)] = relu_ && s < 0.0 ? 0.0 : s;
  }
  cache.input = in;
  cache.output = out;
  return out;
}

Tensor Dense::backward(const Tensor& grad_out, const LayerCache& cache, bool accumulate) {
  const Tensor& in = cache.input;
  Tensor grad_in(in.channels, in.height, in.width);
  for (int o = 0; o < out_; ++o) {
    double g = grad_out.data[static_cast<std::size_t>(o)];
    if (relu_ && cache.output.data[static_cast<std::size_t>(o)] <= 0.0) g = 0.0;
    if (g == 0.0) continue;
    const std::size_t row = static_cast<std::size_t>(o) * in_;
    for (int i = 0; i < in_; ++i) {
      grad_in.data[static_cast<std::size_t>(i)] += weight_.value[row + i] * g;
      if (accumulate) weight_.grad[row + i] += g * in.data[static_cast<std::size_t>(i)];
    }
    if (accumulate) bias_.grad[static_cast<std::size_t>(o)] += g;
  }
  return grad_in;
}

Dropout::Dropout(std::string name, double rate) : Layer(std::move(name)), rate_(rate) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
}

Tensor Dropout::forward(const Tensor& in, LayerCache& cache, bool training, std::mt19937_64* rng) const {
  if (!training || rate_ == 0.0) {
    cache.mask.clear();
    return in;
  }
  require(rng != nullptr, name() + ": training mode needs an rng");
  const double keep = 1.0 - rate_;
  cache.mask.resize(in.size());
  Tensor out = in;
  for (std::size_t i = 0; i < in.size(); ++i) {
    cache.mask[i] = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
    out.data[i] *= cache.mask[i];
  }
  return out;
}

Tensor Dropout::backward(const Tensor& grad_out, const LayerCache& cache, bool) {
  if (cache.mask.empty()) return grad_out;
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= cache.mask[i];
  return g;
}

Tensor Sequential::forward(const Tensor& in, std::vector<LayerCache>* caches, bool training,
                           std::mt19937_64* rng) const {
  LayerCache scratch;
  if (caches) caches->resize(layers_.size());
  Tensor cur = in;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur, caches ? (*caches)[i] : scratch, training, rng);
  }
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out, const std::vector<LayerCache>& caches, bool accumulate) {
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, caches[i], accumulate);
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

Shape Sequential::output_shape(Shape in) const {
  for (const auto& l : layers_) in = l->output_shape(in);
  return in;
}

}  // namespace dermxai
