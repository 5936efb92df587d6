#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "rfbtd/errors.hpp"
#include "rfbtd/geometry.hpp"
#include "rfbtd/network.hpp"

using namespace rfbtd;

namespace {

Tensor random_image(int h, int w, std::uint64_t seed) {
  nn::Rng rng(seed);
  Tensor t(3, h, w);
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-2, 2));
  return t;
}

// Random init leaves residual branches and heads at zero; perturb everything
// so that every path carries signal.
void perturb(Model& m, std::uint64_t seed, double amount = 0.05) {
  nn::Rng rng(seed);
  m.visit([&](nn::Param& p) {
    for (float& v : p.value) v += static_cast<float>(rng.uniform(-amount, amount));
  });
}

}  // namespace

TEST(Network, ShapeLawSquare) {
  Model m(ModelConfig::tiny());
  m.init(1);
  nn::NoGrad ng;
  const ModelOutput out = m.forward(Tensor(3, 512, 512));
  EXPECT_EQ(out.score.shape_string(), "(1,128,128)");
  EXPECT_EQ(out.geometry.shape_string(), "(5,128,128)");
  EXPECT_EQ(out.valid_h, 128);
  EXPECT_EQ(out.valid_w, 128);
}

TEST(Network, ShapeLawWide) {
  Model m(ModelConfig::tiny());
  m.init(1);
  nn::NoGrad ng;
  // 1280 wide, 704 high.
  const ModelOutput out = m.forward(Tensor(3, 704, 1280));
  EXPECT_EQ(out.score.c, 1);
  EXPECT_EQ(out.score.w, 320);
  EXPECT_EQ(out.score.h, 176);
  EXPECT_EQ(out.geometry.c, 5);
  EXPECT_EQ(out.geometry.w, 320);
  EXPECT_EQ(out.geometry.h, 176);
}

TEST(Network, UnalignedInputIsPaddedAndValidExtentRecorded) {
  Model m(ModelConfig::tiny());
  m.init(1);
  nn::NoGrad ng;
  const ModelOutput out = m.forward(Tensor(3, 100, 130));
  EXPECT_EQ(out.score.h, 128 / 4);
  EXPECT_EQ(out.score.w, 160 / 4);
  EXPECT_EQ(out.valid_h, 25);
  EXPECT_EQ(out.valid_w, 33);
}

TEST(Network, RejectsWrongChannelCount) {
  Model m(ModelConfig::tiny());
  m.init(1);
  EXPECT_THROW(m.forward(Tensor(1, 32, 32)), ShapeError);
}

TEST(Network, HeadRanges) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.distance_scale = 64;
  Model m(cfg);
  m.init(2);
  perturb(m, 3, 0.3);
  nn::NoGrad ng;
  const ModelOutput out = m.forward(random_image(64, 64, 4));
  for (float s : out.score.data) {
    EXPECT_GE(s, 0.0f);
    EXPECT_LE(s, 1.0f);
  }
  for (int c = 0; c < 4; ++c)
    for (float d : out.geometry.channel(c)) {
      EXPECT_GE(d, 0.0f);
      EXPECT_LE(d, 64.0f);
    }
  for (float t : out.geometry.channel(4)) {
    EXPECT_GE(t, -kQuarterPi - 1e-6);
    EXPECT_LE(t, kQuarterPi + 1e-6);
  }
}

TEST(Network, FreshHeadsPredictTheMidpoint) {
  ModelConfig cfg = ModelConfig::tiny();
  Model m(cfg);
  m.init(5);
  m.heads().zero();
  nn::NoGrad ng;
  const ModelOutput out = m.forward(random_image(32, 32, 6));
  EXPECT_FLOAT_EQ(out.score.data[0], 0.5f);
  EXPECT_FLOAT_EQ(out.geometry.at(0, 0, 0), static_cast<float>(cfg.distance_scale / 2));
  EXPECT_NEAR(out.geometry.at(4, 0, 0), 0.0f, 1e-7);
}

TEST(Network, StagesHaveExpectedStridesAndWidths) {
  const ModelConfig cfg = ModelConfig::resnet50();
  Backbone b(cfg.stem);
  const auto ch = b.stage_channels();
  EXPECT_EQ(ch[0], 64);
  EXPECT_EQ(ch[1], 256);
  EXPECT_EQ(ch[2], 512);
  EXPECT_EQ(ch[3], 1024);
  EXPECT_EQ(ch[4], 2048);

  Model m(ModelConfig::tiny());
  m.init(1);
  nn::NoGrad ng;
  const auto stages = m.extract_stages(Tensor(3, 64, 96));
  ASSERT_EQ(stages.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(stages[i].index, static_cast<int>(i) + 1);
    EXPECT_EQ(stages[i].stride, 2 << i);
    EXPECT_EQ(stages[i].grid.h, 64 / stages[i].stride);
    EXPECT_EQ(stages[i].grid.w, 96 / stages[i].stride);
  }
}

TEST(Network, ResNet50BackboneParameterCount) {
  // Conv weights of the standard 50-layer residual stem (no classifier, no
  // normalization layers) plus one bias per output channel.
  Backbone b(ModelConfig::resnet50().stem);
  std::size_t weights = 0, biases = 0;
  b.visit([&](nn::Param& p) { (p.shape.size() == 1 ? biases : weights) += p.size(); });
  EXPECT_EQ(weights, 23454912u);
  EXPECT_GT(biases, 0u);
}

TEST(Network, ParametersHaveUniqueNames) {
  Model m(ModelConfig::tiny());
  std::set<std::string> names;
  m.visit([&](nn::Param& p) { EXPECT_TRUE(names.insert(p.name).second) << p.name; });
  EXPECT_EQ(names.size(), m.parameters().size());
}

TEST(Network, InitIsDeterministic) {
  Model a(ModelConfig::tiny()), b(ModelConfig::tiny());
  a.init(9);
  b.init(9);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
}

TEST(Network, TranslationCovarianceAtMultiplesOf32) {
  Model m(ModelConfig::tiny());
  m.init(7);
  perturb(m, 8);
  // Zero biases + zero canvas make padding indistinguishable from background,
  // so the network is exactly shift-covariant while the content stays more
  // than half a receptive field from every border.
  m.visit([](nn::Param& p) {
    if (p.shape.size() == 1) std::fill(p.value.begin(), p.value.end(), 0.0f);
  });
  const int half_rf = (m.receptive_field_bound() + 1) / 2;
  const int patch = 32, shift = 32;
  const int side = ((2 * half_rf + patch + shift + 31) / 32) * 32;
  Tensor a(3, side, side), b(3, side, side);
  nn::Rng rng(10);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) {
        const float v = static_cast<float>(rng.uniform(-2, 2));
        a.at(c, half_rf + y, half_rf + x) = v;
        b.at(c, half_rf + y + shift, half_rf + x + shift) = v;
      }
  nn::NoGrad ng;
  const ModelOutput oa = m.forward(a);
  const ModelOutput ob = m.forward(b);
  const int d = shift / kOutputStride;
  double max_diff = 0;
  for (int ch = 0; ch < 5; ++ch)
    for (int r = 0; r + d < oa.score.h; ++r)
      for (int c = 0; c + d < oa.score.w; ++c)
        max_diff = std::max(max_diff, static_cast<double>(std::abs(oa.geometry.at(ch, r, c) - ob.geometry.at(ch, r + d, c + d))));
  for (int r = 0; r + d < oa.score.h; ++r)
    for (int c = 0; c + d < oa.score.w; ++c)
      max_diff = std::max(max_diff, static_cast<double>(std::abs(oa.score.at(0, r, c) - ob.score.at(0, r + d, c + d))));
  EXPECT_LT(max_diff, 1e-4);
}

TEST(Network, ReceptiveFieldBoundCoversTheStem) {
  Model m(ModelConfig::tiny());
  Backbone& b = m.backbone();
  RFProfile p;
  for (const auto& path : b.stage_paths())
    for (const auto& s : path) p = compose(p, s);
  EXPECT_EQ(p.jump, 32);
  EXPECT_GT(m.receptive_field_bound(), p.size);
}

TEST(Network, EndToEndGradientMatchesFiniteDifferences) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.distance_scale = 16;
  Model m(cfg);
  m.init(11);
  perturb(m, 12, 0.02);
  const Tensor x = random_image(32, 32, 13);
  nn::Rng rng(14);
  const ModelOutput out = m.forward(x);
  OutputGrad g{Tensor(1, out.score.h, out.score.w), Tensor(5, out.geometry.h, out.geometry.w)};
  for (float& v : g.score.data) v = static_cast<float>(rng.uniform(-1, 1));
  for (float& v : g.geometry.data) v = static_cast<float>(rng.uniform(-0.1, 0.1));
  m.zero_grad();
  m.backward(g);
  const auto loss = [&] {
    nn::NoGrad ng;
    const ModelOutput o = m.forward(x);
    double s = 0;
    for (std::size_t i = 0; i < o.score.data.size(); ++i) s += static_cast<double>(o.score.data[i]) * g.score.data[i];
    for (std::size_t i = 0; i < o.geometry.data.size(); ++i)
      s += static_cast<double>(o.geometry.data[i]) * g.geometry.data[i];
    return s;
  };
  const auto params = m.parameters();
  int checked = 0;
  for (int t = 0; t < 40; ++t) {
    nn::Param& p = *params[rng.below(params.size())];
    const std::size_t i = rng.below(p.size());
    const float x0 = p.value[i];
    const float h = 1e-3f;
    p.value[i] = x0 + h;
    const double fp = loss();
    p.value[i] = x0 - h;
    const double fm = loss();
    p.value[i] = x0;
    const double fd = (fp - fm) / (2 * h);
    EXPECT_NEAR(p.grad[i], fd, 2e-2 * std::max(1.0, std::abs(fd))) << p.name << "[" << i << "]";
    ++checked;
  }
  EXPECT_EQ(checked, 40);
}
