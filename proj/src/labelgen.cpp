#include "rfbtd/labelgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rfbtd/errors.hpp"
#include "rfbtd/nn/layers.hpp"

namespace rfbtd {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

std::vector<Annotation> parse_icdar_gt(std::string_view text) {
  constexpr std::string_view kBom = "\xEF\xBB\xBF";
  if (text.substr(0, kBom.size()) == kBom) text.remove_prefix(kBom.size());

  std::vector<Annotation> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    std::array<double, 8> coords{};
    std::string_view rest = line;
    for (int i = 0; i < 8; ++i) {
      const std::size_t comma = rest.find(',');
      if (comma == std::string_view::npos)
        throw ParseError("expected 8 coordinates and a transcription, found " + std::to_string(i + 1) + " fields",
                         line_no);
      if (!parse_number(rest.substr(0, comma), coords[i]))
        throw ParseError("non-numeric coordinate '" + std::string(trim(rest.substr(0, comma))) + "'", line_no);
      rest.remove_prefix(comma + 1);
    }
    Annotation a;
    a.quad = order_quad({{{coords[0], coords[1]}, {coords[2], coords[3]}, {coords[4], coords[5]}, {coords[6], coords[7]}}});
    a.transcription = std::string(rest);
    a.is_dont_care = a.transcription == kDontCareMarker;
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Annotation> load_icdar_gt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open ground truth file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_icdar_gt(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.detail(), e.line(), path.filename().string());
  }
}

RBox shrink_rbox(const RBox& r, double ratio) {
  const double inset = ratio * std::min(r.w, r.h);
  RBox s = r;
  s.w = std::max(0.0, r.w - 2.0 * inset);
  s.h = std::max(0.0, r.h - 2.0 * inset);
  return s;
}

TrainTarget build_targets(std::span<const Annotation> annotations, int width, int height, const TargetOptions& opt) {
  if (opt.stride <= 0 || width % opt.stride != 0 || height % opt.stride != 0)
    throw LabelError("stride " + std::to_string(opt.stride) + " must divide the image size " + std::to_string(width) +
                     "x" + std::to_string(height));
  const int gh = height / opt.stride;
  const int gw = width / opt.stride;
  TrainTarget t;
  t.stride = opt.stride;
  t.score = Tensor(1, gh, gw);
  t.geometry = Tensor(5, gh, gw);
  t.mask = Tensor(1, gh, gw, 1.0f);
  t.owner.assign(static_cast<std::size_t>(gh) * gw, -1);
  t.boxes.assign(annotations.size(), RBox{});
  std::vector<double> owner_area(t.owner.size(), std::numeric_limits<double>::infinity());

  auto cell_range = [&](std::span<const Point> poly, int& r0, int& r1, int& c0, int& c1) {
    double xmin = poly[0].x, xmax = xmin, ymin = poly[0].y, ymax = ymin;
    for (const Point& p : poly) {
      xmin = std::min(xmin, p.x);
      xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y);
      ymax = std::max(ymax, p.y);
    }
    c0 = std::max(0, static_cast<int>(std::floor(xmin / opt.stride)));
    c1 = std::min(gw - 1, static_cast<int>(std::ceil(xmax / opt.stride)));
    r0 = std::max(0, static_cast<int>(std::floor(ymin / opt.stride)));
    r1 = std::min(gh - 1, static_cast<int>(std::ceil(ymax / opt.stride)));
  };

  for (std::size_t k = 0; k < annotations.size(); ++k) {
    Quad q = annotations[k].quad;
    bool outside = false;
    for (Point& p : q.v) {
      if (p.x < 0.0 || p.y < 0.0 || p.x > width || p.y > height) {
        outside = true;
        p.x = std::clamp(p.x, 0.0, static_cast<double>(width));
        p.y = std::clamp(p.y, 0.0, static_cast<double>(height));
      }
    }
    if (outside && opt.bounds == BoundsPolicy::reject)
      throw LabelError("annotation " + std::to_string(k) + " lies outside the image");

    bool dont_care = annotations[k].is_dont_care || q.area() < opt.min_area;
    RBox box;
    if (!dont_care) {
      try {
        box = min_area_rect(q);
      } catch (const DegenerateGeometryError&) {
        dont_care = true;
      }
    }

    int r0, r1, c0, c1;
    if (dont_care) {
      cell_range(q.v, r0, r1, c0, c1);
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
          if (point_in_polygon(q.v, cell_center(r, c, opt.stride))) t.mask.at(0, r, c) = 0.0f;
      continue;
    }

    t.boxes[k] = box;
    const RBox shrunk = shrink_rbox(box, opt.shrink_ratio);
    const Quad sq = rbox_to_quad(shrunk);
    cell_range(sq.v, r0, r1, c0, c1);
    const double area = box.area();
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (!contains(shrunk, cell_center(r, c, opt.stride))) continue;
        const std::size_t idx = static_cast<std::size_t>(r) * gw + c;
        if (area < owner_area[idx]) {
          owner_area[idx] = area;
          t.owner[idx] = static_cast<int>(k);
        }
      }
    }
  }

  const std::size_t plane = t.owner.size();
  for (std::size_t idx = 0; idx < plane; ++idx) {
    const int k = t.owner[idx];
    if (k < 0) continue;
    const int r = static_cast<int>(idx / static_cast<std::size_t>(gw));
    const int c = static_cast<int>(idx % static_cast<std::size_t>(gw));
    const PixelGeometry g = encode_pixel_geometry(t.boxes[static_cast<std::size_t>(k)], cell_center(r, c, opt.stride));
    t.score.data[idx] = 1.0f;
    t.geometry.data[idx] = static_cast<float>(g.top);
    t.geometry.data[plane + idx] = static_cast<float>(g.right);
    t.geometry.data[2 * plane + idx] = static_cast<float>(g.bottom);
    t.geometry.data[3 * plane + idx] = static_cast<float>(g.left);
    t.geometry.data[4 * plane + idx] = static_cast<float>(g.theta);
  }
  return t;
}

Crop sample_crop(const Image& image, std::span<const Annotation> annotations, int crop_size, std::uint64_t seed) {
  const int pw = std::max(image.width, crop_size);
  const int ph = std::max(image.height, crop_size);
  nn::Rng rng(seed);
  Crop crop;
  crop.offset_x = static_cast<int>(rng.below(static_cast<std::uint64_t>(pw - crop_size) + 1));
  crop.offset_y = static_cast<int>(rng.below(static_cast<std::uint64_t>(ph - crop_size) + 1));

  crop.image = Image(crop_size, crop_size, image.channels, 0);
  for (int y = 0; y < crop_size; ++y) {
    const int sy = y + crop.offset_y;
    if (sy >= image.height) break;
    const int copy_w = std::min(crop_size, image.width - crop.offset_x);
    if (copy_w <= 0) break;
    std::copy_n(&image.pixels[(static_cast<std::size_t>(sy) * image.width + crop.offset_x) * image.channels],
                static_cast<std::size_t>(copy_w) * image.channels, &crop.image.pixels[static_cast<std::size_t>(y) *
                                                                                       crop_size * image.channels]);
  }

  const double cs = crop_size;
  const std::array<Point, 4> window{{{0, 0}, {cs, 0}, {cs, cs}, {0, cs}}};
  for (const Annotation& a : annotations) {
    Annotation moved = a;
    bool all_inside = true;
    for (Point& p : moved.quad.v) {
      p.x -= crop.offset_x;
      p.y -= crop.offset_y;
      all_inside = all_inside && p.x >= 0.0 && p.y >= 0.0 && p.x <= cs && p.y <= cs;
    }
    if (!all_inside) {
      const auto hull = convex_hull(moved.quad.v);
      const double overlap = hull.size() >= 3 ? signed_area(clip_convex(hull, window)) : 0.0;
      if (!(overlap > 0.0)) continue;
      moved.transcription = std::string(kDontCareMarker);
      moved.is_dont_care = true;
    }
    crop.annotations.push_back(std::move(moved));
  }
  return crop;
}

std::vector<Annotation> scale_annotations(std::span<const Annotation> annotations, double sx, double sy) {
  std::vector<Annotation> out(annotations.begin(), annotations.end());
  for (auto& a : out)
    for (Point& p : a.quad.v) {
      p.x *= sx;
      p.y *= sy;
    }
  return out;
}

}  // namespace rfbtd
