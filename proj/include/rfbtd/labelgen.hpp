#pragma once

// ICDAR2015 ground truth ingestion and dense training-target construction.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rfbtd/geometry.hpp"
#include "rfbtd/image.hpp"
#include "rfbtd/tensor.hpp"

namespace rfbtd {

inline constexpr std::string_view kDontCareMarker = "###";

struct Annotation {
  Quad quad;
  std::string transcription;
  bool is_dont_care = false;
};

// One annotation per line: x1,y1,x2,y2,x3,y3,x4,y4,transcription. A leading
// UTF-8 byte-order mark is dropped, blank lines are skipped, and commas after
// the eighth coordinate belong to the transcription. Vertices are reordered
// clockwise from the top-left-most corner. Throws ParseError with the 1-based
// line number on malformed input.
std::vector<Annotation> parse_icdar_gt(std::string_view text);
std::vector<Annotation> load_icdar_gt(const std::filesystem::path& path);

enum class BoundsPolicy { clip, reject };

struct TargetOptions {
  int stride = 4;
  // Each side of the fitted box moves inward by this fraction of its short
  // side before cells are marked positive.
  double shrink_ratio = 0.3;
  BoundsPolicy bounds = BoundsPolicy::clip;
  // Quads below this area (px^2) are treated as don't-care instead of fitted.
  double min_area = 1.0;
};

struct TrainTarget {
  Tensor score;     // (1, H/s, W/s) in {0, 1}
  Tensor geometry;  // (5, H/s, W/s): top, right, bottom, left, theta
  Tensor mask;      // (1, H/s, W/s) in {0, 1}
  // Index of the annotation that owns each positive cell, -1 elsewhere.
  std::vector<int> owner;
  std::vector<RBox> boxes;  // fitted box per annotation (zero box if not fitted)
  int stride = 4;
};

// Input-image location that output cell (row, col) stands for.
inline Point cell_center(int row, int col, int stride) {
  return {(col + 0.5) * stride, (row + 0.5) * stride};
}

RBox shrink_rbox(const RBox& r, double ratio);

TrainTarget build_targets(std::span<const Annotation> annotations, int width, int height,
                          const TargetOptions& opt = {});

struct Crop {
  Image image;
  std::vector<Annotation> annotations;
  int offset_x = 0;
  int offset_y = 0;
};

// Uniform crop position from `seed`; images smaller than the crop are
// zero-padded on the bottom/right first. Annotations entirely outside the
// crop are dropped and ones cut by the border become don't-care.
Crop sample_crop(const Image& image, std::span<const Annotation> annotations, int crop_size, std::uint64_t seed);

// Uniform rescale of the annotation coordinates.
std::vector<Annotation> scale_annotations(std::span<const Annotation> annotations, double sx, double sy);

}  // namespace rfbtd
