#pragma once

// ICDAR2015-style detection scoring: greedy one-to-one matching at an IoU
// threshold with don't-care exclusion, then micro-averaged P/R/F.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rfbtd/labelgen.hpp"
#include "rfbtd/postprocess.hpp"

namespace rfbtd {

struct EvalCounts {
  std::size_t matched = 0;
  std::size_t detections = 0;     // detections counted toward precision
  std::size_t ground_truths = 0;  // non-don't-care ground truths

  EvalCounts& operator+=(const EvalCounts& o) {
    matched += o.matched;
    detections += o.detections;
    ground_truths += o.ground_truths;
    return *this;
  }
};

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (detection index, gt index)
  EvalCounts counts;
};

double harmonic_mean(double precision, double recall);
EvalResult result_from_counts(const EvalCounts& counts);

EvalResult evaluate(std::span<const Detection> dets, std::span<const Annotation> gts, double iou_threshold = 0.5);

// Micro-average: P/R/F of the summed counts.
EvalResult aggregate(std::span<const EvalCounts> per_image);

// Submission files: one "x1,y1,...,x4,y4" line per detection in integer
// pixels. An optional ninth field is read as the score; otherwise earlier
// lines rank higher.
std::string format_submission(std::span<const Detection> dets);
std::vector<Detection> parse_submission(std::string_view text);

struct DirectoryEvaluation {
  EvalResult total;
  std::vector<std::pair<std::string, EvalCounts>> per_image;  // keyed by image stem ("img_7")
};

// Pairs res_img_<N>.txt in det_dir with gt_img_<N>.txt in gt_dir. A missing
// result file counts as zero detections; a result file without ground truth
// is an error listing every offender.
DirectoryEvaluation evaluate_directories(const std::filesystem::path& det_dir, const std::filesystem::path& gt_dir,
                                         double iou_threshold = 0.5);

}  // namespace rfbtd
