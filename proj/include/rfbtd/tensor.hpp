#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rfbtd {

// Dense CHW float grid. A batch is processed one sample at a time, so there is
// no leading batch dimension.
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f)
      : c(channels), h(height), w(width), data(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

  float& at(int ch, int y, int x) { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }

  std::span<float> channel(int ch) { return {data.data() + static_cast<std::size_t>(ch) * plane(), plane()}; }
  std::span<const float> channel(int ch) const {
    return {data.data() + static_cast<std::size_t>(ch) * plane(), plane()};
  }

  std::string shape_string() const {
    return "(" + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

}  // namespace rfbtd
