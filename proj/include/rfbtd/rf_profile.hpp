#pragma once

// Analytic receptive-field arithmetic for convolution stacks.
//
// For a layer with kernel k, dilation d and stride s applied to a feature
// whose receptive field is `size` input pixels wide with sample spacing
// `jump`:  k_eff = k + (k - 1)(d - 1),  size' = size + (k_eff - 1) * jump,
// jump' = jump * s. Everything is exact integer arithmetic.

#include <span>
#include <vector>

#include "rfbtd/image.hpp"

namespace rfbtd {

struct LayerSpec {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int dilation = 1;

  static LayerSpec square(int k, int stride = 1, int dilation = 1) { return {k, k, stride, dilation}; }
};

struct RFProfile {
  int size = 1;    // max(size_h, size_w)
  int size_h = 1;
  int size_w = 1;
  int jump = 1;
  // Receptive-field extent of each parallel branch (one entry for a plain
  // stack). Sorted ascending, duplicates kept.
  std::vector<int> radii;
};

int effective_kernel(int kernel, int dilation);

RFProfile compose(const RFProfile& in, const LayerSpec& layer);

// Plain stack, starting from a single input pixel. Throws on an empty list.
RFProfile compute_rf_profile(std::span<const LayerSpec> layers);

// Parallel branches that all start from `start`; `size` is the widest branch
// and `radii` lists every branch. All branches must agree on total stride.
RFProfile compute_rf_profile(std::span<const std::vector<LayerSpec>> branches, const RFProfile& start = {});

// Superposes a centered square of side r for every r in profile.radii, each
// contributing an equal share of full intensity.
Image render_rf_map(const RFProfile& profile, int canvas_size);

}  // namespace rfbtd
