#include "rfbtd/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rfbtd/errors.hpp"
#include "rfbtd/simd/kernels.hpp"

namespace rfbtd::nn {

namespace {

thread_local bool g_grad_enabled = true;

// im2col buffers are built in column chunks of at most this many floats.
constexpr std::size_t kColBudget = std::size_t{1} << 22;

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGrad::NoGrad() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGrad::~NoGrad() { g_grad_enabled = previous_; }

Param::Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  value.assign(count, 0.0f);
  grad.assign(count, 0.0f);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel_h, int kernel_w, Options opt)
    : weight(name + ".weight", {out_channels, in_channels, kernel_h, kernel_w}),
      in_(in_channels),
      out_(out_channels),
      kh_(kernel_h),
      kw_(kernel_w),
      stride_(opt.stride),
      dilation_(opt.dilation) {
  if (in_channels <= 0 || out_channels <= 0 || kernel_h <= 0 || kernel_w <= 0 || opt.stride <= 0 || opt.dilation <= 0)
    throw ConfigError("conv " + name + ": sizes must be positive");
  if (opt.bias) bias = Param(name + ".bias", {out_channels});
  pad_h_ = dilation_ * (kh_ - 1) / 2;
  pad_w_ = dilation_ * (kw_ - 1) / 2;
}

int Conv2d::output_size(int input, bool vertical) const {
  const int k = vertical ? kh_ : kw_;
  const int pad = vertical ? pad_h_ : pad_w_;
  return (input + 2 * pad - dilation_ * (k - 1) - 1) / stride_ + 1;
}

void Conv2d::visit(const ParamVisitor& f) {
  f(weight);
  if (bias.size() > 0) f(bias);
}

void Conv2d::init(Rng& rng, double gain) {
  const double fan_in = static_cast<double>(in_) * kh_ * kw_;
  const double stddev = gain * std::sqrt(2.0 / fan_in);
  for (float& v : weight.value) v = static_cast<float>(rng.normal() * stddev);
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

void Conv2d::zero_weights() {
  std::fill(weight.value.begin(), weight.value.end(), 0.0f);
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

void Conv2d::im2col(const Tensor& x, int ow, std::size_t j0, std::size_t j1, float* col) const {
  const std::size_t width = j1 - j0;
  for (int c = 0; c < in_; ++c) {
    for (int ki = 0; ki < kh_; ++ki) {
      for (int kj = 0; kj < kw_; ++kj) {
        float* row = col + (static_cast<std::size_t>(c * kh_ + ki) * kw_ + kj) * width;
        const int dy = ki * dilation_ - pad_h_;
        const int dx = kj * dilation_ - pad_w_;
        int oy = static_cast<int>(j0 / static_cast<std::size_t>(ow));
        int ox = static_cast<int>(j0 % static_cast<std::size_t>(ow));
        for (std::size_t j = 0; j < width; ++j) {
          const int iy = oy * stride_ + dy;
          const int ix = ox * stride_ + dx;
          row[j] = (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w) ? x.at(c, iy, ix) : 0.0f;
          if (++ox == ow) {
            ox = 0;
            ++oy;
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const float* col, int ow, std::size_t j0, std::size_t j1, Tensor& gx) const {
  const std::size_t width = j1 - j0;
  for (int c = 0; c < in_; ++c) {
    for (int ki = 0; ki < kh_; ++ki) {
      for (int kj = 0; kj < kw_; ++kj) {
        const float* row = col + (static_cast<std::size_t>(c * kh_ + ki) * kw_ + kj) * width;
        const int dy = ki * dilation_ - pad_h_;
        const int dx = kj * dilation_ - pad_w_;
        int oy = static_cast<int>(j0 / static_cast<std::size_t>(ow));
        int ox = static_cast<int>(j0 % static_cast<std::size_t>(ow));
        for (std::size_t j = 0; j < width; ++j) {
          const int iy = oy * stride_ + dy;
          const int ix = ox * stride_ + dx;
          if (iy >= 0 && iy < gx.h && ix >= 0 && ix < gx.w) gx.at(c, iy, ix) += row[j];
          if (++ox == ow) {
            ox = 0;
            ++oy;
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c != in_)
    throw ShapeError(weight.name + ": expected " + std::to_string(in_) + " input channels, got " + std::to_string(x.c));
  const int oh = output_size(x.h, true);
  const int ow = output_size(x.w, false);
  Tensor y(out_, oh, ow);
  const std::size_t npix = y.plane();
  if (bias.size() > 0) {
    for (int o = 0; o < out_; ++o) std::fill_n(y.data.data() + o * npix, npix, bias.value[o]);
  }
  const auto& k = simd::kernels();
  const int depth = in_ * kh_ * kw_;
  if (is_pointwise()) {
    k.gemm_nn(out_, static_cast<int>(npix), depth, weight.value.data(), depth, x.data.data(), static_cast<int>(npix),
              y.data.data(), static_cast<int>(npix));
  } else {
    const std::size_t chunk = std::max<std::size_t>(1, std::min(npix, kColBudget / static_cast<std::size_t>(depth)));
    std::vector<float> col(static_cast<std::size_t>(depth) * chunk);
    for (std::size_t j0 = 0; j0 < npix; j0 += chunk) {
      const std::size_t j1 = std::min(npix, j0 + chunk);
      const int width = static_cast<int>(j1 - j0);
      im2col(x, ow, j0, j1, col.data());
      k.gemm_nn(out_, width, depth, weight.value.data(), depth, col.data(), width, y.data.data() + j0,
                static_cast<int>(npix));
    }
  }
  if (grad_enabled()) input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  const Tensor& x = input_;
  if (x.size() == 0) throw ShapeError(weight.name + ": backward without a cached forward");
  const int ow = gy.w;
  const std::size_t npix = gy.plane();
  Tensor gx(x.c, x.h, x.w);
  const auto& k = simd::kernels();
  const int depth = in_ * kh_ * kw_;
  if (bias.size() > 0) {
    for (int o = 0; o < out_; ++o) {
      const float* g = gy.data.data() + o * npix;
      double s = 0.0;
      for (std::size_t j = 0; j < npix; ++j) s += g[j];
      bias.grad[o] += static_cast<float>(s);
    }
  }
  if (is_pointwise()) {
    k.gemm_nt(out_, depth, static_cast<int>(npix), gy.data.data(), static_cast<int>(npix), x.data.data(),
              static_cast<int>(npix), weight.grad.data(), depth);
    k.gemm_tn(depth, static_cast<int>(npix), out_, weight.value.data(), depth, gy.data.data(), static_cast<int>(npix),
              gx.data.data(), static_cast<int>(npix));
  } else {
    const std::size_t chunk = std::max<std::size_t>(1, std::min(npix, kColBudget / static_cast<std::size_t>(depth)));
    std::vector<float> col(static_cast<std::size_t>(depth) * chunk);
    std::vector<float> gcol(static_cast<std::size_t>(depth) * chunk);
    for (std::size_t j0 = 0; j0 < npix; j0 += chunk) {
      const std::size_t j1 = std::min(npix, j0 + chunk);
      const int width = static_cast<int>(j1 - j0);
      im2col(x, ow, j0, j1, col.data());
      k.gemm_nt(out_, depth, width, gy.data.data() + j0, static_cast<int>(npix), col.data(), width, weight.grad.data(),
                depth);
      std::fill_n(gcol.data(), static_cast<std::size_t>(depth) * width, 0.0f);
      k.gemm_tn(depth, width, out_, weight.value.data(), depth, gy.data.data() + j0, static_cast<int>(npix), gcol.data(),
                width);
      col2im(gcol.data(), ow, j0, j1, gx);
    }
  }
  input_ = Tensor();
  return gx;
}

Tensor ReLU::forward(const Tensor& x) {
  Tensor y(x.c, x.h, x.w);
  simd::kernels().relu(x.size(), x.data.data(), y.data.data());
  if (grad_enabled()) input_ = x;
  return y;
}

Tensor ReLU::backward(const Tensor& gy) {
  Tensor gx(gy.c, gy.h, gy.w);
  simd::kernels().relu_backward(gy.size(), input_.data.data(), gy.data.data(), gx.data.data());
  input_ = Tensor();
  return gx;
}

Tensor MaxPool::forward(const Tensor& x) {
  const int oh = (x.h + 2 - 3) / 2 + 1;
  const int ow = (x.w + 2 - 3) / 2 + 1;
  Tensor y(x.c, oh, ow);
  const bool keep = grad_enabled();
  if (keep) argmax_.assign(y.size(), 0);
  for (int c = 0; c < x.c; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        std::uint32_t best_idx = 0;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * 2 - 1 + ky;
          if (iy < 0 || iy >= x.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * 2 - 1 + kx;
            if (ix < 0 || ix >= x.w) continue;
            const float v = x.at(c, iy, ix);
            if (v > best) {
              best = v;
              best_idx = static_cast<std::uint32_t>((static_cast<std::size_t>(c) * x.h + iy) * x.w + ix);
            }
          }
        }
        y.at(c, oy, ox) = best;
        if (keep) argmax_[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = best_idx;
      }
    }
  }
  in_c_ = x.c;
  in_h_ = x.h;
  in_w_ = x.w;
  return y;
}

Tensor MaxPool::backward(const Tensor& gy) {
  Tensor gx(in_c_, in_h_, in_w_);
  for (std::size_t i = 0; i < gy.size(); ++i) gx.data[argmax_[i]] += gy.data[i];
  argmax_.clear();
  return gx;
}

namespace {

struct Tap {
  int i0, i1;
  float w0, w1;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * 0.5 - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const float l1 = static_cast<float>(src - i0);
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0f - l1, l1};
  }
  return taps;
}

}  // namespace

Tensor upsample2x(const Tensor& x) {
  Tensor y(x.c, x.h * 2, x.w * 2);
  const auto ty = bilinear_taps(x.h, y.h);
  const auto tx = bilinear_taps(x.w, y.w);
  for (int c = 0; c < x.c; ++c) {
    for (int oy = 0; oy < y.h; ++oy) {
      const Tap& a = ty[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < y.w; ++ox) {
        const Tap& b = tx[static_cast<std::size_t>(ox)];
        y.at(c, oy, ox) = a.w0 * (b.w0 * x.at(c, a.i0, b.i0) + b.w1 * x.at(c, a.i0, b.i1)) +
                          a.w1 * (b.w0 * x.at(c, a.i1, b.i0) + b.w1 * x.at(c, a.i1, b.i1));
      }
    }
  }
  return y;
}

Tensor upsample2x_backward(const Tensor& gy, int in_h, int in_w) {
  Tensor gx(gy.c, in_h, in_w);
  const auto ty = bilinear_taps(in_h, gy.h);
  const auto tx = bilinear_taps(in_w, gy.w);
  for (int c = 0; c < gy.c; ++c) {
    for (int oy = 0; oy < gy.h; ++oy) {
      const Tap& a = ty[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < gy.w; ++ox) {
        const Tap& b = tx[static_cast<std::size_t>(ox)];
        const float g = gy.at(c, oy, ox);
        gx.at(c, a.i0, b.i0) += a.w0 * b.w0 * g;
        gx.at(c, a.i0, b.i1) += a.w0 * b.w1 * g;
        gx.at(c, a.i1, b.i0) += a.w1 * b.w0 * g;
        gx.at(c, a.i1, b.i1) += a.w1 * b.w1 * g;
      }
    }
  }
  return gx;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src)) throw ShapeError("add: " + dst.shape_string() + " vs " + src.shape_string());
  simd::kernels().axpy(dst.size(), 1.0f, src.data.data(), dst.data.data());
}

}  // namespace rfbtd::nn
