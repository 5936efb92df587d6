#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "rfbtd/network.hpp"
#include "rfbtd/nn/layers.hpp"

using namespace rfbtd;

namespace {

Tensor random_tensor(int c, int h, int w, nn::Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(c, h, w);
  for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// Scalar probe loss L = sum(y * probe) so that dL/dy = probe.
double probe_loss(const Tensor& y, const Tensor& probe) {
  double s = 0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += static_cast<double>(y.data[i]) * probe.data[i];
  return s;
}

// Compares analytic gradients against central differences on a sample of
// coordinates of `values`. `grad` is read after one forward/backward.
void check_coordinates(const std::function<double()>& loss, std::vector<float>& values, const std::vector<float>& grad,
                       double h, double tol, nn::Rng& rng, int samples = 25) {
  ASSERT_EQ(values.size(), grad.size());
  for (int s = 0; s < samples; ++s) {
    const std::size_t i = rng.below(values.size());
    const float x0 = values[i];
    values[i] = x0 + static_cast<float>(h);
    const double fp = loss();
    values[i] = x0 - static_cast<float>(h);
    const double fm = loss();
    values[i] = x0;
    const double fd = (fp - fm) / (2 * h);
    EXPECT_NEAR(grad[i], fd, tol * std::max(1.0, std::abs(fd))) << "coordinate " << i;
  }
}

struct ConvCase {
  int in, out, kh, kw, stride, dilation;
  int h, w;
};

}  // namespace

TEST(Conv2d, OutputSizeFollowsPaddingRule) {
  nn::Conv2d c("c", 1, 1, 3, {.stride = 2, .dilation = 1, .bias = true});
  EXPECT_EQ(c.output_size(32, true), 16);
  EXPECT_EQ(c.output_size(33, true), 17);
  nn::Conv2d d("d", 1, 1, 3, {.stride = 1, .dilation = 5, .bias = true});
  EXPECT_EQ(d.output_size(20, false), 20);
}

TEST(Conv2d, MatchesDirectConvolution) {
  nn::Rng rng(1);
  nn::Conv2d conv("c", 2, 3, 3, 5, {.stride = 2, .dilation = 2, .bias = true});
  conv.init(rng);
  for (float& b : conv.bias.value) b = static_cast<float>(rng.uniform(-1, 1));
  const Tensor x = random_tensor(2, 9, 12, rng);
  const Tensor y = conv.forward(x);
  const int ph = 2 * (3 - 1) / 2, pw = 2 * (5 - 1) / 2;
  ASSERT_EQ(y.h, (9 + 2 * ph - 2 * 2 - 1) / 2 + 1);
  ASSERT_EQ(y.w, (12 + 2 * pw - 2 * 4 - 1) / 2 + 1);
  for (int o = 0; o < 3; ++o)
    for (int r = 0; r < y.h; ++r)
      for (int c = 0; c < y.w; ++c) {
        double acc = conv.bias.value[static_cast<std::size_t>(o)];
        for (int i = 0; i < 2; ++i)
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 5; ++v) {
              const int yy = r * 2 - ph + u * 2, xx = c * 2 - pw + v * 2;
              if (yy < 0 || yy >= 9 || xx < 0 || xx >= 12) continue;
              acc += conv.weight.value[static_cast<std::size_t>(((o * 2 + i) * 3 + u) * 5 + v)] * x.at(i, yy, xx);
            }
        EXPECT_NEAR(y.at(o, r, c), acc, 1e-5);
      }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  const ConvCase cases[] = {
      {3, 4, 3, 3, 1, 1, 7, 6}, {2, 5, 3, 3, 2, 1, 9, 8}, {4, 3, 3, 3, 1, 3, 10, 10},
      {3, 2, 1, 3, 1, 3, 6, 9}, {3, 2, 3, 1, 1, 1, 6, 5}, {4, 6, 1, 1, 1, 1, 5, 5},
      {3, 4, 7, 7, 2, 1, 12, 12}, {2, 2, 5, 5, 1, 1, 8, 7},
  };
  nn::Rng rng(2);
  for (const auto& cc : cases) {
    SCOPED_TRACE(testing::Message() << cc.in << "->" << cc.out << " k" << cc.kh << "x" << cc.kw << " s" << cc.stride
                                    << " d" << cc.dilation);
    nn::Conv2d conv("c", cc.in, cc.out, cc.kh, cc.kw, {.stride = cc.stride, .dilation = cc.dilation, .bias = true});
    conv.init(rng);
    Tensor x = random_tensor(cc.in, cc.h, cc.w, rng);
    const Tensor y0 = conv.forward(x);
    const Tensor probe = random_tensor(y0.c, y0.h, y0.w, rng);
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    const Tensor gx = conv.backward(probe);

    const auto loss = [&] {
      nn::NoGrad ng;
      return probe_loss(conv.forward(x), probe);
    };
    check_coordinates(loss, conv.weight.value, conv.weight.grad, 1e-2, 2e-3, rng);
    check_coordinates(loss, conv.bias.value, conv.bias.grad, 1e-2, 2e-3, rng, 5);
    check_coordinates(loss, x.data, gx.data, 1e-2, 2e-3, rng);
  }
}

TEST(Conv2d, GradientsAccumulateAcrossCalls) {
  nn::Rng rng(3);
  nn::Conv2d conv("c", 2, 2, 3, {.stride = 1, .dilation = 1, .bias = true});
  conv.init(rng);
  const Tensor x = random_tensor(2, 5, 5, rng);
  const Tensor probe = random_tensor(2, 5, 5, rng);
  conv.forward(x);
  conv.backward(probe);
  const auto once = conv.weight.grad;
  conv.forward(x);
  conv.backward(probe);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(conv.weight.grad[i], 2 * once[i], 1e-5);
}

TEST(Conv2d, NoGradSkipsCaching) {
  nn::Rng rng(4);
  nn::Conv2d conv("c", 1, 1, 3, {.stride = 1, .dilation = 1, .bias = true});
  conv.init(rng);
  EXPECT_TRUE(nn::grad_enabled());
  {
    nn::NoGrad ng;
    EXPECT_FALSE(nn::grad_enabled());
    conv.forward(random_tensor(1, 4, 4, rng));
  }
  EXPECT_TRUE(nn::grad_enabled());
}

TEST(MaxPool, ForwardAndGradient) {
  nn::Rng rng(5);
  nn::MaxPool pool;
  // Well-separated values keep the argmax stable under perturbation.
  Tensor x(2, 7, 6);
  std::vector<int> perm(x.data.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  for (std::size_t i = 0; i < perm.size(); ++i) x.data[i] = static_cast<float>(perm[i]);
  const Tensor y = pool.forward(x);
  EXPECT_EQ(y.h, 4);
  EXPECT_EQ(y.w, 3);
  for (int c = 0; c < 2; ++c)
    for (int r = 0; r < y.h; ++r)
      for (int q = 0; q < y.w; ++q) {
        float m = -1e30f;
        for (int u = -1; u <= 1; ++u)
          for (int v = -1; v <= 1; ++v) {
            const int yy = 2 * r + u, xx = 2 * q + v;
            if (yy >= 0 && yy < 7 && xx >= 0 && xx < 6) m = std::max(m, x.at(c, yy, xx));
          }
        EXPECT_EQ(y.at(c, r, q), m);
      }
  const Tensor probe = random_tensor(y.c, y.h, y.w, rng);
  const Tensor gx = pool.backward(probe);
  const auto loss = [&] {
    nn::NoGrad ng;
    nn::MaxPool p;
    return probe_loss(p.forward(x), probe);
  };
  check_coordinates(loss, x.data, gx.data, 0.1, 1e-3, rng, 40);
}

TEST(Upsample, ForwardIsBilinearWithHalfPixelCenters) {
  Tensor x(1, 1, 2);
  x.data = {0.0f, 4.0f};
  const Tensor y = nn::upsample2x(x);
  ASSERT_EQ(y.w, 4);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 1), 1.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 2), 3.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 3), 4.0f);
  EXPECT_FLOAT_EQ(y.at(0, 1, 2), 3.0f);
}

TEST(Upsample, BackwardIsTheAdjoint) {
  nn::Rng rng(6);
  Tensor x = random_tensor(3, 5, 4, rng);
  const Tensor probe = random_tensor(3, 10, 8, rng);
  const Tensor gx = nn::upsample2x_backward(probe, 5, 4);
  const auto loss = [&] { return probe_loss(nn::upsample2x(x), probe); };
  check_coordinates(loss, x.data, gx.data, 1e-2, 1e-3, rng, 40);
}

TEST(ReLU, GradientMasksNegativeInputs) {
  nn::ReLU relu;
  Tensor x(1, 1, 4);
  x.data = {-1.0f, 2.0f, 0.5f, -0.1f};
  const Tensor y = relu.forward(x);
  EXPECT_EQ(y.data, (std::vector<float>{0.0f, 2.0f, 0.5f, 0.0f}));
  Tensor g(1, 1, 4, 1.0f);
  EXPECT_EQ(relu.backward(g).data, (std::vector<float>{0.0f, 1.0f, 1.0f, 0.0f}));
}

TEST(Blocks, RfbBlockGradients) {
  nn::Rng rng(7);
  for (bool small : {false, true}) {
    RfbBlock block("rfb", small ? RfbConfig::rfb_s(8, 6) : RfbConfig::rfb(8, 8));
    block.init(rng);
    // Give every branch a non-trivial path so all parameters get gradient.
    block.visit([&](nn::Param& p) {
      for (float& v : p.value) v += static_cast<float>(rng.uniform(-0.05, 0.05));
    });
    Tensor x = random_tensor(8, 9, 9, rng);
    const Tensor y = block.forward(x);
    const Tensor probe = random_tensor(y.c, y.h, y.w, rng);
    block.visit([](nn::Param& p) { p.zero_grad(); });
    const Tensor gx = block.backward(probe);
    const auto loss = [&] {
      nn::NoGrad ng;
      return probe_loss(block.forward(x), probe);
    };
    check_coordinates(loss, x.data, gx.data, 1e-3, 2e-2, rng, 20);
    std::vector<nn::Param*> params;
    block.visit([&](nn::Param& p) { params.push_back(&p); });
    for (int k = 0; k < 6; ++k) {
      nn::Param& p = *params[rng.below(params.size())];
      SCOPED_TRACE(p.name);
      check_coordinates(loss, p.value, p.grad, 1e-3, 2e-2, rng, 3);
    }
  }
}

TEST(Blocks, BottleneckGradients) {
  nn::Rng rng(8);
  Bottleneck b("b", 6, 3, 8, 2);
  b.init(rng);
  b.visit([&](nn::Param& p) {
    for (float& v : p.value) v += static_cast<float>(rng.uniform(-0.05, 0.05));
  });
  Tensor x = random_tensor(6, 8, 8, rng);
  const Tensor y = b.forward(x);
  EXPECT_EQ(y.c, 8);
  EXPECT_EQ(y.h, 4);
  const Tensor probe = random_tensor(y.c, y.h, y.w, rng);
  b.visit([](nn::Param& p) { p.zero_grad(); });
  const Tensor gx = b.backward(probe);
  const auto loss = [&] {
    nn::NoGrad ng;
    return probe_loss(b.forward(x), probe);
  };
  check_coordinates(loss, x.data, gx.data, 1e-3, 2e-2, rng, 20);
}

TEST(Rng, IsDeterministicAndInRange) {
  nn::Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    EXPECT_EQ(u, b.uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.below(7), 7u);
    b.below(7);
  }
}
