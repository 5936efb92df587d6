#pragma once

#include <cstdint>
#include <vector>

#include "rfbtd/tensor.hpp"

namespace rfbtd {

// 8-bit interleaved raster (HWC). Channels are RGB when there are three.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int ch, std::uint8_t fill = 0)
      : width(w), height(h), channels(ch), pixels(static_cast<std::size_t>(w) * h * ch, fill) {}

  bool empty() const { return pixels.empty(); }
  std::uint8_t& at(int y, int x, int ch = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  std::uint8_t at(int y, int x, int ch = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
};

// Per-channel mean/std normalization into a CHW tensor.
Tensor to_tensor(const Image& img);

// Zero-pads (bottom/right) to the next multiple of `multiple`.
Tensor pad_to_multiple(const Tensor& t, int multiple);

// Bilinear resize, used for inference rescaling and ingestion downscaling.
Image resize_bilinear(const Image& img, int width, int height);

}  // namespace rfbtd
