#include "rfbtd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rfbtd/errors.hpp"

namespace rfbtd {

namespace {

constexpr double kAngleSnap = 1e-9;

bool segments_cross(Point a, Point b, Point c, Point d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace

double signed_area(std::span<const Point> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    s += p.x * q.y - q.x * p.y;
  }
  return 0.5 * s;
}

double Quad::signed_area() const { return rfbtd::signed_area(v); }
double Quad::area() const { return std::abs(signed_area()); }

Quad order_quad(const std::array<Point, 4>& pts) {
  std::array<Point, 4> p = pts;
  if (rfbtd::signed_area(p) < 0.0) std::reverse(p.begin(), p.end());
  std::size_t start = 0;
  for (std::size_t i = 1; i < 4; ++i) {
    const double si = p[i].x + p[i].y;
    const double sb = p[start].x + p[start].y;
    if (si < sb || (si == sb && p[i].y < p[start].y)) start = i;
  }
  Quad q;
  for (std::size_t i = 0; i < 4; ++i) q.v[i] = p[(start + i) % 4];
  return q;
}

bool is_valid_quad(const Quad& q) {
  if (segments_cross(q.v[0], q.v[1], q.v[2], q.v[3])) return false;
  if (segments_cross(q.v[1], q.v[2], q.v[3], q.v[0])) return false;
  return q.signed_area() > 0.0;
}

std::vector<Point> convex_hull(std::span<const Point> input) {
  std::vector<Point> pts(input.begin(), input.end());
  std::sort(pts.begin(), pts.end(), [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;

  // Lower/upper chains with cross <= 0 popped: builds the hull with positive
  // shoelace orientation, which is clockwise on screen.
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point& p : pts) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const Point& p = pts[i - 1];
    while (k >= t && cross(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

RBox canonicalize(const RBox& r) {
  RBox out = r;
  double t = std::remainder(r.theta, kPi);
  if (t > kQuarterPi + kAngleSnap) {
    t -= kPi / 2.0;
    std::swap(out.w, out.h);
  } else if (t < -kQuarterPi - kAngleSnap) {
    t += kPi / 2.0;
    std::swap(out.w, out.h);
  }
  if (std::abs(t + kQuarterPi) <= kAngleSnap) {
    t = kQuarterPi;
    std::swap(out.w, out.h);
  } else if (std::abs(t - kQuarterPi) <= kAngleSnap) {
    t = kQuarterPi;
  }
  out.theta = t;
  return out;
}

RBox min_area_rect(std::span<const Point> pts) {
  const std::vector<Point> hull = convex_hull(pts);
  if (hull.size() < 3) throw DegenerateGeometryError("min_area_rect: fewer than 3 distinct hull vertices");
  if (!(signed_area(hull) > 0.0)) throw DegenerateGeometryError("min_area_rect: zero-area input");

  double best_area = std::numeric_limits<double>::infinity();
  RBox best;
  const std::size_t n = hull.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point e = hull[(i + 1) % n] - hull[i];
    const double len = std::hypot(e.x, e.y);
    const Point u{e.x / len, e.y / len};
    const Point nrm{-u.y, u.x};
    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    double nmin = umin, nmax = -umin;
    for (const Point& p : hull) {
      const double a = dot(p, u);
      const double b = dot(p, nrm);
      umin = std::min(umin, a);
      umax = std::max(umax, a);
      nmin = std::min(nmin, b);
      nmax = std::max(nmax, b);
    }
    const double area = (umax - umin) * (nmax - nmin);
    if (area < best_area) {
      best_area = area;
      const double cu = 0.5 * (umin + umax);
      const double cn = 0.5 * (nmin + nmax);
      best.cx = u.x * cu + nrm.x * cn;
      best.cy = u.y * cu + nrm.y * cn;
      best.w = umax - umin;
      best.h = nmax - nmin;
      best.theta = std::atan2(u.y, u.x);
    }
  }
  return canonicalize(best);
}

RBox min_area_rect(const Quad& q) {
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j)
      if (q.v[i] == q.v[j]) throw DegenerateGeometryError("min_area_rect: coincident quad vertices");
  return min_area_rect(std::span<const Point>(q.v));
}

Quad rbox_to_quad(const RBox& r) {
  const double c = std::cos(r.theta);
  const double s = std::sin(r.theta);
  const double hw = 0.5 * r.w;
  const double hh = 0.5 * r.h;
  const std::array<Point, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  Quad q;
  for (std::size_t i = 0; i < 4; ++i) {
    q.v[i] = {r.cx + c * local[i].x - s * local[i].y, r.cy + s * local[i].x + c * local[i].y};
  }
  return q;
}

namespace {

PixelGeometry distances_to_edges(const RBox& r, Point p) {
  const double c = std::cos(r.theta);
  const double s = std::sin(r.theta);
  const Point d = p - r.center();
  const double lx = c * d.x + s * d.y;
  const double ly = -s * d.x + c * d.y;
  return {0.5 * r.h + ly, 0.5 * r.w - lx, 0.5 * r.h - ly, 0.5 * r.w + lx, r.theta};
}

}  // namespace

bool contains(const RBox& r, Point p) {
  const PixelGeometry g = distances_to_edges(r, p);
  return g.top > 0.0 && g.right > 0.0 && g.bottom > 0.0 && g.left > 0.0;
}

PixelGeometry encode_pixel_geometry(const RBox& r, Point p) {
  const PixelGeometry g = distances_to_edges(r, p);
  if (!(g.top > 0.0 && g.right > 0.0 && g.bottom > 0.0 && g.left > 0.0))
    throw OutOfBoxError("encode_pixel_geometry: pixel is not strictly inside the box");
  return g;
}

RBox decode_pixel_geometry(Point p, const PixelGeometry& g) {
  if (!(g.top > 0.0 && g.right > 0.0 && g.bottom > 0.0 && g.left > 0.0))
    throw InvalidGeometryError("decode_pixel_geometry: distances must be positive");
  const double c = std::cos(g.theta);
  const double s = std::sin(g.theta);
  const double lx = 0.5 * (g.right - g.left);
  const double ly = 0.5 * (g.bottom - g.top);
  RBox r;
  r.cx = p.x + c * lx - s * ly;
  r.cy = p.y + s * lx + c * ly;
  r.w = g.left + g.right;
  r.h = g.top + g.bottom;
  r.theta = g.theta;
  return canonicalize(r);
}

std::vector<Point> clip_convex(std::span<const Point> subject, std::span<const Point> clip) {
  std::vector<Point> out(subject.begin(), subject.end());
  std::vector<Point> in;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !out.empty(); ++e) {
    const Point a = clip[e];
    const Point b = clip[(e + 1) % m];
    const Point ab = b - a;
    in.swap(out);
    out.clear();
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point p = in[i];
      const Point q = in[(i + 1) % n];
      const double sp = cross(ab, p - a);
      const double sq = cross(ab, q - a);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + (q - p) * t);
      }
    }
  }
  return out;
}

namespace {

std::vector<Point> clockwise(std::span<const Point> poly) {
  std::vector<Point> p(poly.begin(), poly.end());
  if (signed_area(p) < 0.0) std::reverse(p.begin(), p.end());
  return p;
}

}  // namespace

double polygon_intersection_area(const Quad& a, const Quad& b) {
  const auto pa = clockwise(a.v);
  const auto pb = clockwise(b.v);
  const auto inter = clip_convex(pa, pb);
  return std::max(0.0, signed_area(inter));
}

double convex_polygon_iou(std::span<const Point> a, std::span<const Point> b) {
  const auto pa = clockwise(a);
  const auto pb = clockwise(b);
  const double area_a = signed_area(pa);
  const double area_b = signed_area(pb);
  const double inter = std::max(0.0, signed_area(clip_convex(pa, pb)));
  const double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double quad_iou(const Quad& a, const Quad& b) {
  const auto ha = convex_hull(a.v);
  const auto hb = convex_hull(b.v);
  if (ha.size() < 3 || hb.size() < 3) return 0.0;
  return convex_polygon_iou(ha, hb);
}

double rotated_iou(const RBox& a, const RBox& b) {
  const Quad qa = rbox_to_quad(a);
  const Quad qb = rbox_to_quad(b);
  return convex_polygon_iou(qa.v, qb.v);
}

bool point_in_polygon(std::span<const Point> poly, Point p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

}  // namespace rfbtd
