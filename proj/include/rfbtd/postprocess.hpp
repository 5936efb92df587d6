#pragma once

// Model output -> final detections: thresholding, per-cell decoding and
// non-maximum suppression. The NMS here is the reference implementation of
// the candidate-buffer contract in nms_kernel_abi.h.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rfbtd/geometry.hpp"
#include "rfbtd/network.hpp"
#include "rfbtd/nms_kernel_abi.h"

namespace rfbtd {

struct Detection {
  Quad quad;
  double score = 0.0;
};

enum class MergeMode : std::int32_t {
  standard = RFBTD_NMS_MODE_STANDARD,
  locality_aware = RFBTD_NMS_MODE_LOCALITY_AWARE,
};

struct NmsConfig {
  double score_threshold = 0.8;
  double nms_iou_threshold = 0.2;
  MergeMode merge_mode = MergeMode::locality_aware;
};

// Candidates in row-major cell order. Coordinates are multiplied by
// `scale_back` to map from network input space to the original image.
std::vector<Detection> decode_predictions(const ModelOutput& out, const NmsConfig& cfg, double scale_back = 1.0);

// Greedy suppression in descending score order; equal scores keep input order.
std::vector<Detection> standard_nms(std::span<const Detection> dets, double iou_threshold);

// Single pass that folds each candidate into the previous group while their
// IoU exceeds the threshold (score-weighted vertex average, summed score),
// followed by standard_nms over the groups ranked by summed score. Reported
// scores are clamped to [0, 1].
std::vector<Detection> locality_aware_nms(std::span<const Detection> dets, double iou_threshold);

// Candidate buffer conversions (layout version 1).
std::vector<double> to_records(std::span<const Detection> dets);
std::vector<Detection> from_records(std::span<const double> records);

// Reference kernel over a raw buffer. Same status codes as the C ABI.
std::int32_t reference_nms_kernel(std::span<const double> records, double iou_threshold, MergeMode mode,
                                  std::vector<double>& out);

// A dynamically loaded native kernel.
class NativeNmsKernel {
 public:
  // Throws std::runtime_error when the library cannot be loaded, a symbol is
  // missing, or the layout version differs.
  explicit NativeNmsKernel(const std::filesystem::path& library);
  ~NativeNmsKernel();
  NativeNmsKernel(const NativeNmsKernel&) = delete;
  NativeNmsKernel& operator=(const NativeNmsKernel&) = delete;

  std::uint32_t version() const { return version_; }
  std::int32_t run(std::span<const double> records, double iou_threshold, MergeMode mode,
                   std::vector<double>& out) const;

 private:
  void* handle_ = nullptr;
  rfbtd_nms_kernel_fn kernel_ = nullptr;
  std::uint32_t version_ = 0;
};

// Picks the native kernel when one is configured and loadable, the reference
// otherwise. The library path comes from the argument or RFBTD_NATIVE_NMS.
class NmsRunner {
 public:
  NmsRunner(bool use_native, const std::filesystem::path& library = {});

  bool native() const { return native_ != nullptr; }
  const std::string& note() const { return note_; }

  std::vector<Detection> run(std::span<const Detection> dets, const NmsConfig& cfg) const;

 private:
  std::unique_ptr<NativeNmsKernel> native_;
  std::string note_;
};

struct ConformanceReport {
  std::size_t cases = 0;
  std::size_t mismatched_counts = 0;
  std::size_t coordinate_failures = 0;
  double max_coordinate_error = 0.0;
  bool passed() const { return cases > 0 && mismatched_counts == 0 && coordinate_failures == 0; }
};

// Runs `kernel` and the reference on the same buffers and compares survivor
// counts/order and coordinates (tolerance 1e-4).
ConformanceReport check_conformance(const NativeNmsKernel& kernel, std::span<const std::vector<double>> corpus,
                                    double iou_threshold, MergeMode mode, double tolerance = 1e-4);

// Random candidate buffer of `count` records: rotated boxes clustered so that
// both suppression and merging trigger.
std::vector<double> random_candidate_buffer(std::size_t count, std::uint64_t seed, double extent = 1000.0);

}  // namespace rfbtd
