#include "rfbtd/io/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "rfbtd/errors.hpp"

namespace rfbtd::io {

namespace {

cv::Mat to_mat_bgr(const Image& img) {
  const int type = img.channels == 1 ? CV_8UC1 : CV_8UC3;
  cv::Mat view(img.height, img.width, type, const_cast<std::uint8_t*>(img.pixels.data()));
  cv::Mat bgr;
  if (img.channels == 1) cv::cvtColor(view, bgr, cv::COLOR_GRAY2BGR);
  else cv::cvtColor(view, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Image from_mat_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image img(rgb.cols, rgb.rows, 3);
  for (int y = 0; y < rgb.rows; ++y)
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3,
                img.pixels.data() + static_cast<std::size_t>(y) * rgb.cols * 3);
  return img;
}

}  // namespace

std::optional<Image> read_image(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) return std::nullopt;
  return from_mat_bgr(m);
}

void write_image(const std::filesystem::path& path, const Image& image) {
  if (!cv::imwrite(path.string(), to_mat_bgr(image))) throw DatasetError("cannot write image " + path.string());
}

Image draw_overlay(const Image& image, std::span<const Detection> dets, int thickness) {
  cv::Mat canvas = to_mat_bgr(image);
  for (const Detection& d : dets) {
    std::vector<cv::Point> pts;
    for (const Point& p : d.quad.v) pts.emplace_back(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
    cv::polylines(canvas, pts, true, cv::Scalar(0, 255, 0), thickness, cv::LINE_AA);
  }
  return from_mat_bgr(canvas);
}

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DatasetError("dataset directory not found: " + dir.string());
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) images.push_back(e.path());
  std::sort(images.begin(), images.end());
  if (images.empty()) throw DatasetError("no images in " + dir.string());

  std::vector<Sample> out;
  out.reserve(images.size());
  for (const fs::path& p : images) {
    const std::string stem = p.stem().string();
    fs::path gt = dir / ("gt_" + stem + ".txt");
    if (!fs::exists(gt)) gt = dir / "gt" / ("gt_" + stem + ".txt");
    if (!fs::exists(gt)) throw DatasetError("missing ground truth for " + p.filename().string());
    auto img = read_image(p);
    if (!img) throw DatasetError("unreadable image " + p.string());
    Sample s;
    s.name = stem;
    s.image = std::move(*img);
    try {
      s.annotations = load_icdar_gt(gt);
    } catch (const ParseError& e) {
      throw DatasetError(gt.string() + ":" + std::to_string(e.line()) + ": " + e.detail());
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rfbtd::io
