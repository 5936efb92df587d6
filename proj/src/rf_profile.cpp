#include "rfbtd/rf_profile.hpp"

#include <algorithm>

#include "rfbtd/errors.hpp"

namespace rfbtd {

int effective_kernel(int kernel, int dilation) { return kernel + (kernel - 1) * (dilation - 1); }

RFProfile compose(const RFProfile& in, const LayerSpec& layer) {
  if (layer.kernel_h < 1 || layer.kernel_w < 1 || layer.stride < 1 || layer.dilation < 1)
    throw ConfigError("layer spec values must be >= 1");
  RFProfile out = in;
  out.size_h = in.size_h + (effective_kernel(layer.kernel_h, layer.dilation) - 1) * in.jump;
  out.size_w = in.size_w + (effective_kernel(layer.kernel_w, layer.dilation) - 1) * in.jump;
  out.size = std::max(out.size_h, out.size_w);
  out.jump = in.jump * layer.stride;
  out.radii = {out.size};
  return out;
}

RFProfile compute_rf_profile(std::span<const LayerSpec> layers) {
  if (layers.empty()) throw ConfigError("compute_rf_profile: empty layer list");
  RFProfile p;
  p.radii = {1};
  for (const LayerSpec& l : layers) p = compose(p, l);
  return p;
}

RFProfile compute_rf_profile(std::span<const std::vector<LayerSpec>> branches, const RFProfile& start) {
  if (branches.empty()) throw ConfigError("compute_rf_profile: no branches");
  RFProfile out = start;
  out.radii.clear();
  out.size = out.size_h = out.size_w = 0;
  int jump = -1;
  for (const auto& branch : branches) {
    RFProfile p = start;
    for (const LayerSpec& l : branch) p = compose(p, l);
    if (jump >= 0 && p.jump != jump) throw ConfigError("compute_rf_profile: branches disagree on stride");
    jump = p.jump;
    out.size_h = std::max(out.size_h, p.size_h);
    out.size_w = std::max(out.size_w, p.size_w);
    out.radii.push_back(p.size);
  }
  out.size = std::max(out.size_h, out.size_w);
  out.jump = jump;
  std::sort(out.radii.begin(), out.radii.end());
  return out;
}

Image render_rf_map(const RFProfile& profile, int canvas_size) {
  Image img(canvas_size, canvas_size, 1, 0);
  if (profile.radii.empty() || canvas_size <= 0) return img;
  const int share = 255 / static_cast<int>(profile.radii.size());
  std::vector<int> acc(static_cast<std::size_t>(canvas_size) * canvas_size, 0);
  for (int r : profile.radii) {
    const int side = std::min(r, canvas_size);
    const int start = (canvas_size - side) / 2;
    for (int y = start; y < start + side; ++y)
      for (int x = start; x < start + side; ++x) acc[static_cast<std::size_t>(y) * canvas_size + x] += share;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(std::min(acc[i], 255));
  return img;
}

}  // namespace rfbtd
