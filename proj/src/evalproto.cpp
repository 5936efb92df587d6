#include "rfbtd/evalproto.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "rfbtd/errors.hpp"

namespace rfbtd {

double harmonic_mean(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

EvalResult result_from_counts(const EvalCounts& counts) {
  EvalResult r;
  r.counts = counts;
  r.precision = counts.detections > 0 ? static_cast<double>(counts.matched) / counts.detections : 0.0;
  r.recall = counts.ground_truths > 0 ? static_cast<double>(counts.matched) / counts.ground_truths : 0.0;
  r.fscore = harmonic_mean(r.precision, r.recall);
  return r;
}

EvalResult evaluate(std::span<const Detection> dets, std::span<const Annotation> gts, double iou_threshold) {
  EvalCounts counts;
  for (const auto& g : gts) counts.ground_truths += g.is_dont_care ? 0 : 1;

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<bool> gt_taken(gts.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  std::vector<double> ious(gts.size());
  for (std::size_t di : order) {
    std::size_t best_any = gts.size();
    double best_any_iou = -1.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      ious[gi] = quad_iou(dets[di].quad, gts[gi].quad);
      if (ious[gi] > best_any_iou) {
        best_any_iou = ious[gi];
        best_any = gi;
      }
    }
    if (best_any < gts.size() && gts[best_any].is_dont_care && best_any_iou >= iou_threshold) continue;
    ++counts.detections;

    std::size_t best = gts.size();
    double best_iou = -1.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].is_dont_care || gt_taken[gi]) continue;
      if (ious[gi] > best_iou) {
        best_iou = ious[gi];
        best = gi;
      }
    }
    if (best < gts.size() && best_iou >= iou_threshold) {
      gt_taken[best] = true;
      matches.emplace_back(di, best);
      ++counts.matched;
    }
  }
  EvalResult r = result_from_counts(counts);
  r.matches = std::move(matches);
  return r;
}

EvalResult aggregate(std::span<const EvalCounts> per_image) {
  EvalCounts total;
  for (const auto& c : per_image) total += c;
  return result_from_counts(total);
}

std::string format_submission(std::span<const Detection> dets) {
  std::ostringstream out;
  for (const auto& d : dets) {
    for (std::size_t i = 0; i < 4; ++i) {
      out << std::lround(d.quad.v[i].x) << ',' << std::lround(d.quad.v[i].y);
      if (i < 3) out << ',';
    }
    out << '\n';
  }
  return out.str();
}

std::vector<Detection> parse_submission(std::string_view text) {
  std::vector<Detection> out;
  std::size_t line_no = 0;
  std::vector<bool> has_score;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<double> fields;
    while (true) {
      const std::size_t comma = line.find(',');
      std::string_view f = line.substr(0, comma);
      while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) throw ParseError("non-numeric submission field", line_no);
      fields.push_back(v);
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (fields.size() != 8 && fields.size() != 9) throw ParseError("expected 8 or 9 fields", line_no);
    Detection d;
    for (std::size_t i = 0; i < 4; ++i) d.quad.v[i] = {fields[2 * i], fields[2 * i + 1]};
    d.score = fields.size() == 9 ? fields[8] : 0.0;
    has_score.push_back(fields.size() == 9);
    out.push_back(d);
  }
  // Unscored lines keep file order as their ranking.
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!has_score[i]) out[i].score = 1.0 - static_cast<double>(i) / static_cast<double>(out.size() + 1);
  return out;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "res_img_12.txt" -> "img_12" for the given prefix.
std::string stem_after(const std::filesystem::path& p, std::string_view prefix) {
  const std::string name = p.filename().string();
  if (name.rfind(prefix, 0) != 0 || p.extension() != ".txt") return {};
  return name.substr(prefix.size(), name.size() - prefix.size() - 4);
}

}  // namespace

DirectoryEvaluation evaluate_directories(const std::filesystem::path& det_dir, const std::filesystem::path& gt_dir,
                                         double iou_threshold) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(gt_dir)) throw DatasetError("ground truth directory not found: " + gt_dir.string());
  std::map<std::string, fs::path> gts, dets;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    const std::string stem = stem_after(e.path(), "gt_");
    if (!stem.empty()) gts[stem] = e.path();
  }
  if (fs::is_directory(det_dir)) {
    for (const auto& e : fs::directory_iterator(det_dir)) {
      const std::string stem = stem_after(e.path(), "res_");
      if (!stem.empty()) dets[stem] = e.path();
    }
  } else if (fs::exists(det_dir)) {
    throw DatasetError("detection path is not a directory: " + det_dir.string());
  }
  std::vector<std::string> orphans;
  for (const auto& [stem, path] : dets)
    if (!gts.contains(stem)) orphans.push_back(path.filename().string());
  if (!orphans.empty()) {
    std::string msg = "no ground truth for detection files:";
    for (const auto& o : orphans) msg += " " + o;
    throw DatasetError(msg);
  }

  DirectoryEvaluation out;
  std::vector<EvalCounts> counts;
  for (const auto& [stem, gt_path] : gts) {
    const auto gt = load_icdar_gt(gt_path);
    std::vector<Detection> det;
    if (auto it = dets.find(stem); it != dets.end()) {
      try {
        det = parse_submission(read_file(it->second));
      } catch (const ParseError& e) {
        throw ParseError(e.detail(), e.line(), it->second.filename().string());
      }
    }
    const EvalResult r = evaluate(det, gt, iou_threshold);
    out.per_image.emplace_back(stem, r.counts);
    counts.push_back(r.counts);
  }
  out.total = aggregate(counts);
  return out;
}

}  // namespace rfbtd
