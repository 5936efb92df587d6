#include "rfbtd/image.hpp"

#include <algorithm>
#include <cmath>

namespace rfbtd {

namespace {

constexpr float kMean[3] = {123.675f, 116.28f, 103.53f};
constexpr float kStd[3] = {58.395f, 57.12f, 57.375f};

}  // namespace

Tensor to_tensor(const Image& img) {
  Tensor t(3, img.height, img.width);
  for (int c = 0; c < 3; ++c) {
    const int src = img.channels >= 3 ? c : 0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(c, y, x) = (static_cast<float>(img.at(y, x, src)) - kMean[c]) / kStd[c];
  }
  return t;
}

Tensor pad_to_multiple(const Tensor& t, int multiple) {
  const int h = (t.h + multiple - 1) / multiple * multiple;
  const int w = (t.w + multiple - 1) / multiple * multiple;
  if (h == t.h && w == t.w) return t;
  Tensor out(t.c, h, w);
  for (int c = 0; c < t.c; ++c)
    for (int y = 0; y < t.h; ++y) std::copy_n(&t.data[(static_cast<std::size_t>(c) * t.h + y) * t.w], t.w, &out.at(c, y, 0));
  return out;
}

Image resize_bilinear(const Image& img, int width, int height) {
  Image out(width, height, img.channels);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ly = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double lx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double v = (1 - ly) * ((1 - lx) * img.at(y0, x0, c) + lx * img.at(y0, x1, c)) +
                         ly * ((1 - lx) * img.at(y1, x0, c) + lx * img.at(y1, x1, c));
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace rfbtd
