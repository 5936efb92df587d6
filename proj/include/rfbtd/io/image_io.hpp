#pragma once

// Raster IO and overlay rendering. Images are held as RGB.

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rfbtd/dataset.hpp"
#include "rfbtd/postprocess.hpp"

namespace rfbtd::io {

// Empty optional when the file is missing or not decodable.
std::optional<Image> read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

// Copy of `image` with each quad stroked.
Image draw_overlay(const Image& image, std::span<const Detection> dets, int thickness = 2);

bool is_image_file(const std::filesystem::path& path);

// Pairs img_<N>.<ext> with gt_img_<N>.txt, looked up next to the image or in
// a "gt" subdirectory. Any missing or unreadable file aborts with
// DatasetError before anything is returned.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

}  // namespace rfbtd::io
