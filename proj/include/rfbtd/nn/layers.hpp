#pragma once

// Layer primitives with hand-written backward passes.
//
// A layer caches what its backward pass needs during forward, but only while
// gradients are enabled (see NoGrad). Gradients accumulate into Param::grad
// until zero_grad is called, which is how minibatches are formed.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rfbtd/rf_profile.hpp"
#include "rfbtd/tensor.hpp"

namespace rfbtd::nn {

bool grad_enabled();

class NoGrad {
 public:
  NoGrad();
  ~NoGrad();
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  bool previous_;
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

using ParamVisitor = std::function<void(Param&)>;

// Deterministic across standard libraries: raw 64-bit draws mapped by hand,
// so initializations and samplers reproduce bit-for-bit anywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();                  // [0, 1)
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t n);  // [0, n)
  double normal();
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

class Conv2d {
 public:
  struct Options {
    int stride = 1;
    int dilation = 1;
    bool bias = true;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel_h, int kernel_w, Options opt);
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, Options opt)
      : Conv2d(name, in_channels, out_channels, kernel, kernel, opt) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  void visit(const ParamVisitor& f);
  // He-normal weights, zero bias. gain scales the standard deviation.
  void init(Rng& rng, double gain = 1.0);
  void zero_weights();

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  LayerSpec spec() const { return {kh_, kw_, stride_, dilation_}; }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
  int output_size(int input, bool vertical) const;

  Param weight;
  Param bias;

 private:
  void im2col(const Tensor& x, int ow, std::size_t j0, std::size_t j1, float* col) const;
  void col2im(const float* col, int ow, std::size_t j0, std::size_t j1, Tensor& gx) const;
  bool is_pointwise() const { return kh_ == 1 && kw_ == 1 && stride_ == 1; }

  int in_ = 0, out_ = 0, kh_ = 1, kw_ = 1, stride_ = 1, dilation_ = 1;
  int pad_h_ = 0, pad_w_ = 0;
  Tensor input_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

 private:
  Tensor input_;
};

// 3x3, stride 2, padding 1.
class MaxPool {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  static LayerSpec spec() { return {3, 3, 2, 1}; }

 private:
  int in_c_ = 0, in_h_ = 0, in_w_ = 0;
  std::vector<std::uint32_t> argmax_;
};

// x2 bilinear resize with half-pixel centers and edge clamping.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& grad_out, int in_h, int in_w);

void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace rfbtd::nn
