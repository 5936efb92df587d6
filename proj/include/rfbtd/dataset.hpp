#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfbtd/image.hpp"
#include "rfbtd/labelgen.hpp"

namespace rfbtd {

struct Sample {
  std::string name;  // image stem, e.g. "img_12"
  Image image;
  std::vector<Annotation> annotations;
};

// Downscales (aspect preserved) when the long side exceeds max_side.
// Returns the applied scale factor, 1 when untouched.
double limit_long_side(Sample& sample, int max_side);

struct SynthOptions {
  int width = 128;
  int height = 128;
  int min_boxes = 1;
  int max_boxes = 3;
  double min_box_h = 18.0;
  double max_box_h = 30.0;
  double min_aspect = 2.0;  // box width / height
  double max_aspect = 4.0;
  double max_angle = 0.5;  // radians, either sign
  double margin = 6.0;     // min distance from the image border
  double dont_care_rate = 0.0;
};

// Text-like striped bars on a noisy background, with matching quads.
Sample make_synthetic_sample(const SynthOptions& opt, std::uint64_t seed, const std::string& name = "synth");
std::vector<Sample> make_synthetic_set(const SynthOptions& opt, int count, std::uint64_t seed);

}  // namespace rfbtd
