#include "rfbtd/postprocess.hpp"

#include <dlfcn.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>

#include "rfbtd/labelgen.hpp"
#include "rfbtd/nn/layers.hpp"

namespace rfbtd {

namespace {

constexpr std::size_t kWidth = RFBTD_NMS_RECORD_WIDTH;

// Candidate with its convex outline and bounding box cached for repeated IoU
// queries.
struct Candidate {
  Quad quad;
  double score = 0.0;
  std::vector<Point> hull;
  double area = 0.0;
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;
};

Candidate make_candidate(const Quad& q, double score) {
  Candidate c;
  c.quad = q;
  c.score = score;
  c.hull = convex_hull(q.v);
  c.area = c.hull.size() >= 3 ? signed_area(c.hull) : 0.0;
  c.xmin = c.xmax = q.v[0].x;
  c.ymin = c.ymax = q.v[0].y;
  for (const Point& p : q.v) {
    c.xmin = std::min(c.xmin, p.x);
    c.xmax = std::max(c.xmax, p.x);
    c.ymin = std::min(c.ymin, p.y);
    c.ymax = std::max(c.ymax, p.y);
  }
  return c;
}

double candidate_iou(const Candidate& a, const Candidate& b) {
  if (a.xmax < b.xmin || b.xmax < a.xmin || a.ymax < b.ymin || b.ymax < a.ymin) return 0.0;
  if (a.hull.size() < 3 || b.hull.size() < 3) return 0.0;
  const double inter = std::max(0.0, signed_area(clip_convex(a.hull, b.hull)));
  const double uni = a.area + b.area - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

std::vector<Candidate> suppress(std::vector<Candidate> cands, double threshold) {
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cands[a].score > cands[b].score; });
  std::vector<Candidate> kept;
  for (std::size_t idx : order) {
    bool keep = true;
    for (const Candidate& k : kept) {
      if (candidate_iou(cands[idx], k) > threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(std::move(cands[idx]));
  }
  return kept;
}

std::vector<Candidate> merge_rows(std::span<const Detection> dets, double threshold) {
  std::vector<Candidate> groups;
  bool open = false;
  Candidate current;
  for (const Detection& d : dets) {
    Candidate c = make_candidate(d.quad, d.score);
    if (open && candidate_iou(c, current) > threshold) {
      const double total = c.score + current.score;
      Quad merged;
      for (std::size_t i = 0; i < 4; ++i) {
        merged.v[i].x = (c.score * c.quad.v[i].x + current.score * current.quad.v[i].x) / total;
        merged.v[i].y = (c.score * c.quad.v[i].y + current.score * current.quad.v[i].y) / total;
      }
      current = make_candidate(merged, total);
    } else {
      if (open) groups.push_back(std::move(current));
      current = std::move(c);
      open = true;
    }
  }
  if (open) groups.push_back(std::move(current));
  return groups;
}

std::vector<Detection> to_detections(std::vector<Candidate>&& cands) {
  std::vector<Detection> out;
  out.reserve(cands.size());
  for (auto& c : cands) out.push_back({c.quad, std::clamp(c.score, 0.0, 1.0)});
  return out;
}

}  // namespace

std::vector<Detection> decode_predictions(const ModelOutput& out, const NmsConfig& cfg, double scale_back) {
  std::vector<Detection> dets;
  const int h = out.valid_h > 0 ? std::min(out.valid_h, out.score.h) : out.score.h;
  const int w = out.valid_w > 0 ? std::min(out.valid_w, out.score.w) : out.score.w;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double s = out.score.at(0, r, c);
      if (s < cfg.score_threshold) continue;
      const PixelGeometry g{out.geometry.at(0, r, c), out.geometry.at(1, r, c), out.geometry.at(2, r, c),
                            out.geometry.at(3, r, c), out.geometry.at(4, r, c)};
      if (!(g.top > 0 && g.right > 0 && g.bottom > 0 && g.left > 0)) continue;
      const RBox box = decode_pixel_geometry(cell_center(r, c, kOutputStride), g);
      Quad q = rbox_to_quad(box);
      for (Point& p : q.v) p = p * scale_back;
      dets.push_back({q, std::clamp(s, 0.0, 1.0)});
    }
  }
  return dets;
}

std::vector<Detection> standard_nms(std::span<const Detection> dets, double iou_threshold) {
  std::vector<Candidate> cands;
  cands.reserve(dets.size());
  for (const Detection& d : dets) cands.push_back(make_candidate(d.quad, d.score));
  return to_detections(suppress(std::move(cands), iou_threshold));
}

std::vector<Detection> locality_aware_nms(std::span<const Detection> dets, double iou_threshold) {
  return to_detections(suppress(merge_rows(dets, iou_threshold), iou_threshold));
}

std::vector<double> to_records(std::span<const Detection> dets) {
  std::vector<double> out;
  out.reserve(dets.size() * kWidth);
  for (const Detection& d : dets) {
    for (const Point& p : d.quad.v) {
      out.push_back(p.x);
      out.push_back(p.y);
    }
    out.push_back(d.score);
  }
  return out;
}

std::vector<Detection> from_records(std::span<const double> records) {
  std::vector<Detection> out(records.size() / kWidth);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* r = records.data() + i * kWidth;
    for (std::size_t v = 0; v < 4; ++v) out[i].quad.v[v] = {r[2 * v], r[2 * v + 1]};
    out[i].score = r[8];
  }
  return out;
}

std::int32_t reference_nms_kernel(std::span<const double> records, double iou_threshold, MergeMode mode,
                                  std::vector<double>& out) {
  out.clear();
  if (records.size() % kWidth != 0) return RFBTD_NMS_ERR_BAD_COUNT;
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) return RFBTD_NMS_ERR_BAD_THRESHOLD;
  if (mode != MergeMode::standard && mode != MergeMode::locality_aware) return RFBTD_NMS_ERR_BAD_MODE;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!std::isfinite(records[i])) return RFBTD_NMS_ERR_NON_FINITE;
    if (i % kWidth == kWidth - 1 && (records[i] < 0.0 || records[i] > 1.0)) return RFBTD_NMS_ERR_BAD_SCORE;
  }
  const auto dets = from_records(records);
  out = to_records(mode == MergeMode::standard ? standard_nms(dets, iou_threshold)
                                                : locality_aware_nms(dets, iou_threshold));
  return RFBTD_NMS_OK;
}

NativeNmsKernel::NativeNmsKernel(const std::filesystem::path& library) {
  handle_ = dlopen(library.c_str(), RTLD_NOW | RTLD_LOCAL);
  if (handle_ == nullptr) throw std::runtime_error("cannot load NMS kernel " + library.string() + ": " + dlerror());
  auto version = reinterpret_cast<rfbtd_nms_kernel_version_fn>(dlsym(handle_, RFBTD_NMS_VERSION_SYMBOL));
  kernel_ = reinterpret_cast<rfbtd_nms_kernel_fn>(dlsym(handle_, RFBTD_NMS_KERNEL_SYMBOL));
  if (version == nullptr || kernel_ == nullptr) {
    dlclose(handle_);
    handle_ = nullptr;
    throw std::runtime_error("NMS kernel " + library.string() + " lacks the required entry points");
  }
  version_ = version();
  if (version_ != RFBTD_NMS_LAYOUT_VERSION) {
    dlclose(handle_);
    handle_ = nullptr;
    throw std::runtime_error("NMS kernel " + library.string() + " speaks layout version " + std::to_string(version_) +
                             ", expected " + std::to_string(RFBTD_NMS_LAYOUT_VERSION));
  }
}

NativeNmsKernel::~NativeNmsKernel() {
  if (handle_ != nullptr) dlclose(handle_);
}

std::int32_t NativeNmsKernel::run(std::span<const double> records, double iou_threshold, MergeMode mode,
                                  std::vector<double>& out) const {
  out.clear();
  if (records.size() % kWidth != 0) return RFBTD_NMS_ERR_BAD_COUNT;
  const std::size_t count = records.size() / kWidth;
  out.assign(records.size(), 0.0);
  std::size_t out_count = 0;
  const std::int32_t status = kernel_(records.data(), count, iou_threshold, static_cast<std::int32_t>(mode),
                                      out.data(), count, &out_count);
  if (status != RFBTD_NMS_OK || out_count > count) {
    out.clear();
    return status != RFBTD_NMS_OK ? status : RFBTD_NMS_ERR_CAPACITY;
  }
  out.resize(out_count * kWidth);
  return status;
}

NmsRunner::NmsRunner(bool use_native, const std::filesystem::path& library) {
  if (!use_native) {
    note_ = "reference NMS (forced)";
    return;
  }
  std::filesystem::path path = library;
  if (path.empty()) {
    if (const char* env = std::getenv("RFBTD_NATIVE_NMS")) path = env;
  }
  if (path.empty()) {
    note_ = "reference NMS (no native kernel configured)";
    return;
  }
  try {
    native_ = std::make_unique<NativeNmsKernel>(path);
    note_ = "native NMS kernel " + path.string();
  } catch (const std::exception& e) {
    note_ = std::string("reference NMS (") + e.what() + ")";
  }
}

std::vector<Detection> NmsRunner::run(std::span<const Detection> dets, const NmsConfig& cfg) const {
  if (native_) {
    std::vector<double> out;
    const auto records = to_records(dets);
    const std::int32_t status = native_->run(records, cfg.nms_iou_threshold, cfg.merge_mode, out);
    if (status != RFBTD_NMS_OK) throw std::runtime_error("native NMS kernel failed with status " + std::to_string(status));
    return from_records(out);
  }
  return cfg.merge_mode == MergeMode::standard ? standard_nms(dets, cfg.nms_iou_threshold)
                                               : locality_aware_nms(dets, cfg.nms_iou_threshold);
}

ConformanceReport check_conformance(const NativeNmsKernel& kernel, std::span<const std::vector<double>> corpus,
                                    double iou_threshold, MergeMode mode, double tolerance) {
  ConformanceReport report;
  for (const auto& buffer : corpus) {
    ++report.cases;
    std::vector<double> ref, native;
    const std::int32_t rs = reference_nms_kernel(buffer, iou_threshold, mode, ref);
    const std::int32_t ns = kernel.run(buffer, iou_threshold, mode, native);
    if (rs != ns || ref.size() != native.size()) {
      ++report.mismatched_counts;
      continue;
    }
    bool ok = true;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double err = std::abs(ref[i] - native[i]);
      report.max_coordinate_error = std::max(report.max_coordinate_error, err);
      if (!(err <= tolerance)) ok = false;
    }
    if (!ok) ++report.coordinate_failures;
  }
  return report;
}

std::vector<double> random_candidate_buffer(std::size_t count, std::uint64_t seed, double extent) {
  nn::Rng rng(seed);
  std::vector<Detection> dets;
  dets.reserve(count);
  const std::size_t clusters = std::max<std::size_t>(1, count / 8);
  std::vector<RBox> centers(clusters);
  for (auto& c : centers) {
    c = {rng.uniform(0, extent), rng.uniform(0, extent), rng.uniform(10, 120), rng.uniform(6, 40),
         rng.uniform(-kQuarterPi, kQuarterPi)};
  }
  for (std::size_t i = 0; i < count; ++i) {
    RBox b = centers[static_cast<std::size_t>(rng.below(clusters))];
    b.cx += rng.uniform(-0.2, 0.2) * b.w;
    b.cy += rng.uniform(-0.2, 0.2) * b.h;
    b.w *= rng.uniform(0.8, 1.2);
    b.h *= rng.uniform(0.8, 1.2);
    b.theta = std::clamp(b.theta + rng.uniform(-0.1, 0.1), -kQuarterPi, kQuarterPi);
    dets.push_back({rbox_to_quad(b), rng.uniform(0.0, 1.0)});
  }
  return to_records(dets);
}

}  // namespace rfbtd
