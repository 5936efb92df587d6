#include "rfbtd/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "rfbtd/nn/layers.hpp"

namespace rfbtd {

double limit_long_side(Sample& s, int max_side) {
  const int long_side = std::max(s.image.width, s.image.height);
  if (long_side <= max_side) return 1.0;
  const double scale = static_cast<double>(max_side) / long_side;
  const int w = std::max(1, static_cast<int>(std::lround(s.image.width * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(s.image.height * scale)));
  const double sx = static_cast<double>(w) / s.image.width;
  const double sy = static_cast<double>(h) / s.image.height;
  s.image = resize_bilinear(s.image, w, h);
  s.annotations = scale_annotations(s.annotations, sx, sy);
  return scale;
}

namespace {

bool separated(const RBox& a, const RBox& b, double gap) {
  RBox ga = a, gb = b;
  ga.w += gap;
  ga.h += gap;
  gb.w += gap;
  gb.h += gap;
  return rotated_iou(ga, gb) == 0.0;
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

Sample make_synthetic_sample(const SynthOptions& opt, std::uint64_t seed, const std::string& name) {
  nn::Rng rng(seed);
  Sample s;
  s.name = name;
  s.image = Image(opt.width, opt.height, 3);

  const double bg = rng.uniform(150.0, 230.0);
  const double tint[3] = {rng.uniform(-15, 15), rng.uniform(-15, 15), rng.uniform(-15, 15)};
  for (int y = 0; y < opt.height; ++y)
    for (int x = 0; x < opt.width; ++x) {
      const double n = rng.uniform(-12.0, 12.0);
      for (int ch = 0; ch < 3; ++ch) s.image.at(y, x, ch) = clamp_byte(bg + tint[ch] + n);
    }

  const int target = opt.min_boxes + static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_boxes - opt.min_boxes + 1)));
  std::vector<RBox> boxes;
  for (int attempt = 0; attempt < 200 && static_cast<int>(boxes.size()) < target; ++attempt) {
    RBox b;
    b.h = rng.uniform(opt.min_box_h, opt.max_box_h);
    b.w = b.h * rng.uniform(opt.min_aspect, opt.max_aspect);
    b.theta = rng.uniform(-opt.max_angle, opt.max_angle);
    b.cx = rng.uniform(0.0, opt.width);
    b.cy = rng.uniform(0.0, opt.height);
    const Quad q = rbox_to_quad(b);
    bool inside = true;
    for (const Point& p : q.v)
      inside = inside && p.x >= opt.margin && p.y >= opt.margin && p.x <= opt.width - opt.margin &&
               p.y <= opt.height - opt.margin;
    if (!inside) continue;
    if (!std::all_of(boxes.begin(), boxes.end(), [&](const RBox& o) { return separated(b, o, 6.0); })) continue;
    boxes.push_back(b);
  }

  for (const RBox& b : boxes) {
    const double ink = rng.uniform(0.0, 1.0) < 0.5 ? rng.uniform(10.0, 70.0) : rng.uniform(250.0, 255.0);
    const double plate = ink < 128 ? std::min(255.0, bg + 25.0) : rng.uniform(40.0, 90.0);
    const double period = b.h * rng.uniform(0.45, 0.6);
    const double c = std::cos(b.theta), sn = std::sin(b.theta);
    const Quad q = rbox_to_quad(b);
    double x0 = opt.width, x1 = 0, y0 = opt.height, y1 = 0;
    for (const Point& p : q.v) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    for (int y = std::max(0, static_cast<int>(y0)); y <= std::min(opt.height - 1, static_cast<int>(y1)); ++y)
      for (int x = std::max(0, static_cast<int>(x0)); x <= std::min(opt.width - 1, static_cast<int>(x1)); ++x) {
        const double dx = x + 0.5 - b.cx, dy = y + 0.5 - b.cy;
        const double u = dx * c + dy * sn;
        const double v = -dx * sn + dy * c;
        if (std::abs(u) > b.w / 2 || std::abs(v) > b.h / 2) continue;
        // Glyph-like vertical strokes on a plate.
        const double phase = std::fmod(u + b.w / 2, period) / period;
        const bool stroke = phase < 0.55 && std::abs(v) < b.h * 0.36;
        const double val = stroke ? ink : plate;
        for (int ch = 0; ch < 3; ++ch) s.image.at(y, x, ch) = clamp_byte(val);
      }
    Annotation a;
    a.quad = order_quad(q.v);
    a.transcription = "text";
    if (opt.dont_care_rate > 0 && rng.uniform() < opt.dont_care_rate) {
      a.transcription = std::string(kDontCareMarker);
      a.is_dont_care = true;
    }
    s.annotations.push_back(a);
  }
  return s;
}

std::vector<Sample> make_synthetic_set(const SynthOptions& opt, int count, std::uint64_t seed) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  nn::Rng rng(seed);
  for (int i = 0; i < count; ++i) out.push_back(make_synthetic_sample(opt, rng.next(), "img_" + std::to_string(i + 1)));
  return out;
}

}  // namespace rfbtd
