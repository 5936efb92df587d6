#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <limits>

#include "generators.hpp"
#include "oracles.hpp"
#include "rfbtd/labelgen.hpp"
#include "rfbtd/postprocess.hpp"

using namespace rfbtd;

namespace {

std::vector<Detection> random_instance(nn::Rng& rng, std::size_t max_n) {
  const std::size_t n = 1 + rng.below(max_n);
  std::vector<Detection> dets;
  RBox anchor = gen::random_rbox(rng, 200);
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < 0.3) anchor = gen::random_rbox(rng, 200);
    // Coarse scores so that ties occur.
    dets.push_back({rbox_to_quad(gen::nearby_rbox(rng, anchor)), std::round(rng.uniform() * 20) / 20});
  }
  return dets;
}

bool same(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!(a[i].quad == b[i].quad) || a[i].score != b[i].score) return false;
  return true;
}

ModelOutput painted_output(const TrainTarget& t) {
  ModelOutput o{t.score, t.geometry, t.score.h, t.score.w};
  return o;
}

}  // namespace

TEST(Nms, StandardMatchesBruteForce) {
  nn::Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto dets = random_instance(rng, 64);
    for (double thr : {0.2, 0.5}) EXPECT_TRUE(same(standard_nms(dets, thr), oracle::brute_nms(dets, thr))) << t;
  }
}

TEST(Nms, IdempotentAndSeparated) {
  nn::Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto dets = random_instance(rng, 40);
    const auto once = standard_nms(dets, 0.3);
    EXPECT_TRUE(same(standard_nms(once, 0.3), once));
    for (std::size_t i = 0; i < once.size(); ++i)
      for (std::size_t j = i + 1; j < once.size(); ++j) EXPECT_LE(quad_iou(once[i].quad, once[j].quad), 0.3 + 1e-12);
    for (std::size_t i = 1; i < once.size(); ++i) EXPECT_GE(once[i - 1].score, once[i].score);
  }
}

TEST(Nms, EqualScoresKeepInputOrder) {
  const Quad a = rbox_to_quad({10, 10, 8, 4, 0}), b = rbox_to_quad({10.5, 10, 8, 4, 0});
  const std::vector<Detection> dets{{b, 0.5}, {a, 0.5}};
  const auto out = standard_nms(dets, 0.2);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].quad, b);
}

TEST(Nms, LocalityAwareMergesConsecutiveNeighbours) {
  const Quad a = rbox_to_quad({50, 50, 40, 10, 0});
  const Quad b = rbox_to_quad({52, 50, 40, 10, 0});
  const Quad far = rbox_to_quad({200, 50, 40, 10, 0});
  const std::vector<Detection> dets{{a, 0.9}, {b, 0.3}, {far, 0.95}};
  const auto out = locality_aware_nms(dets, 0.2);
  ASSERT_EQ(out.size(), 2u);
  // Group scores are summed (1.2) and clamped on output.
  EXPECT_EQ(out[0].score, 1.0);
  EXPECT_NEAR(out[0].quad.v[0].x, (0.9 * a.v[0].x + 0.3 * b.v[0].x) / 1.2, 1e-12);
  EXPECT_EQ(out[1].quad, far);
}

TEST(Nms, LocalityAwareOnSeparatedBoxesIsStandard) {
  std::vector<Detection> dets;
  for (int i = 0; i < 6; ++i) dets.push_back({rbox_to_quad({20.0 + 40 * i, 20, 20, 8, 0.1}), 0.1 * (i + 1)});
  EXPECT_TRUE(same(locality_aware_nms(dets, 0.2), standard_nms(dets, 0.2)));
}

TEST(Decode, PaintedTargetsRecoverTheBoxes) {
  std::vector<Annotation> ann;
  for (const RBox& r : {RBox{60, 40, 70, 20, 0.2}, RBox{180, 150, 90, 24, -0.3}, RBox{80, 190, 50, 30, 0.0}}) {
    Annotation a;
    a.quad = order_quad(rbox_to_quad(r).v);
    a.transcription = "t";
    ann.push_back(a);
  }
  const TrainTarget t = build_targets(ann, 256, 256);
  const NmsConfig cfg{0.5, 0.2, MergeMode::locality_aware};
  const auto cands = decode_predictions(painted_output(t), cfg);
  int positives = 0;
  for (float s : t.score.data) positives += s > 0.5f;
  EXPECT_EQ(static_cast<int>(cands.size()), positives);
  for (const Detection& d : cands) {
    double best = 0;
    for (const RBox& b : t.boxes) best = std::max(best, quad_iou(d.quad, rbox_to_quad(b)));
    EXPECT_GE(best, 0.999);
  }
  const auto out = locality_aware_nms(cands, cfg.nms_iou_threshold);
  ASSERT_EQ(out.size(), 3u);
  for (const RBox& b : t.boxes) {
    double best = 0;
    for (const Detection& d : out) best = std::max(best, quad_iou(d.quad, rbox_to_quad(b)));
    EXPECT_GE(best, 0.99);
  }
}

TEST(Decode, ThresholdValidExtentAndScaleBack) {
  ModelOutput o{Tensor(1, 4, 4), Tensor(5, 4, 4, 2.0f), 2, 2};
  o.geometry.channel(4)[0] = 0;
  o.score.at(0, 0, 0) = 0.9f;
  o.score.at(0, 1, 1) = 0.7f;
  o.score.at(0, 3, 3) = 0.95f;  // outside the valid extent
  const auto d = decode_predictions(o, {0.8, 0.2, MergeMode::standard}, 2.0);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NEAR(d[0].score, 0.9, 1e-6);
  EXPECT_EQ(d[0].quad.v[0], (Point{0, 0}));
  EXPECT_EQ(d[0].quad.v[2], (Point{8, 8}));
}

TEST(Records, RoundTrip) {
  nn::Rng rng(3);
  const auto dets = random_instance(rng, 20);
  const auto rec = to_records(dets);
  EXPECT_EQ(rec.size(), dets.size() * RFBTD_NMS_RECORD_WIDTH);
  EXPECT_TRUE(same(from_records(rec), dets));
}

TEST(ReferenceKernel, StatusCodes) {
  std::vector<double> out{1, 2, 3};
  auto rec = to_records(std::vector<Detection>{{rbox_to_quad({5, 5, 4, 2, 0}), 0.5}});
  EXPECT_EQ(reference_nms_kernel(rec, 0.2, MergeMode::standard, out), RFBTD_NMS_OK);
  EXPECT_EQ(out.size(), 9u);
  std::vector<double> truncated(rec.begin(), rec.end() - 1);
  EXPECT_EQ(reference_nms_kernel(truncated, 0.2, MergeMode::standard, out), RFBTD_NMS_ERR_BAD_COUNT);
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(reference_nms_kernel(rec, 1.5, MergeMode::standard, out), RFBTD_NMS_ERR_BAD_THRESHOLD);
  EXPECT_EQ(reference_nms_kernel(rec, 0.2, static_cast<MergeMode>(7), out), RFBTD_NMS_ERR_BAD_MODE);
  auto bad = rec;
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(reference_nms_kernel(bad, 0.2, MergeMode::standard, out), RFBTD_NMS_ERR_NON_FINITE);
  bad = rec;
  bad[8] = 1.5;
  EXPECT_EQ(reference_nms_kernel(bad, 0.2, MergeMode::standard, out), RFBTD_NMS_ERR_BAD_SCORE);
  EXPECT_EQ(reference_nms_kernel({}, 0.2, MergeMode::locality_aware, out), RFBTD_NMS_OK);
  EXPECT_TRUE(out.empty());
}

TEST(ReferenceKernel, RandomBuffersTriggerSuppression) {
  const auto buf = random_candidate_buffer(400, 4);
  EXPECT_EQ(buf.size(), 400u * RFBTD_NMS_RECORD_WIDTH);
  std::vector<double> out;
  ASSERT_EQ(reference_nms_kernel(buf, 0.2, MergeMode::standard, out), RFBTD_NMS_OK);
  EXPECT_LT(out.size(), buf.size());
  EXPECT_GT(out.size(), 0u);
}

TEST(NativeKernel, LoadsAndConforms) {
  NativeNmsKernel k(RFBTD_TEST_PLUGIN);
  EXPECT_EQ(k.version(), RFBTD_NMS_LAYOUT_VERSION);
  std::vector<std::vector<double>> corpus;
  for (std::uint64_t s = 0; s < 10; ++s) corpus.push_back(random_candidate_buffer(50 + 10 * s, s));
  for (MergeMode m : {MergeMode::standard, MergeMode::locality_aware}) {
    const ConformanceReport r = check_conformance(k, corpus, 0.2, m);
    EXPECT_TRUE(r.passed());
    EXPECT_EQ(r.cases, 10u);
    EXPECT_EQ(r.max_coordinate_error, 0.0);
  }
  std::vector<double> out{1};
  EXPECT_EQ(k.run(std::vector<double>(10, 0.0), 0.2, MergeMode::standard, out), RFBTD_NMS_ERR_BAD_COUNT);
  EXPECT_TRUE(out.empty());
}

TEST(NativeKernel, RejectsWrongLayoutVersion) {
  try {
    NativeNmsKernel k(RFBTD_TEST_BAD_PLUGIN);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("layout version 2"), std::string::npos) << e.what();
  }
}

TEST(NativeKernel, MissingLibraryThrows) {
  EXPECT_THROW(NativeNmsKernel("/nonexistent/libnothing.so"), std::runtime_error);
}

TEST(NmsRunner, FallsBackToTheReference) {
  const NmsRunner forced(false);
  EXPECT_FALSE(forced.native());
  const NmsRunner broken(true, "/nonexistent/libnothing.so");
  EXPECT_FALSE(broken.native());
  EXPECT_NE(broken.note().find("reference"), std::string::npos);
  const NmsRunner bad_version(true, RFBTD_TEST_BAD_PLUGIN);
  EXPECT_FALSE(bad_version.native());
}

TEST(NmsRunner, NativeAndReferenceAgree) {
  const NmsRunner native(true, RFBTD_TEST_PLUGIN);
  ASSERT_TRUE(native.native()) << native.note();
  const NmsRunner ref(false);
  const auto dets = from_records(random_candidate_buffer(120, 9));
  for (MergeMode m : {MergeMode::standard, MergeMode::locality_aware}) {
    const NmsConfig cfg{0.0, 0.2, m};
    EXPECT_TRUE(same(native.run(dets, cfg), ref.run(dets, cfg)));
  }
}
