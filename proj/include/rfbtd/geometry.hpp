#pragma once

// Rotated-box math shared by label generation, post-processing and evaluation.
//
// Coordinates are image pixels with y growing downward. A box's local x axis
// is (cos theta, sin theta) and its local y axis is (-sin theta, cos theta);
// "width" is the extent along local x. Polygons are stored clockwise as seen
// on screen, which is a positive shoelace area in these coordinates.

#include <array>
#include <span>
#include <vector>

namespace rfbtd {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(Point a, double s) { return {a.x * s, a.y * s}; }
  friend bool operator==(const Point&, const Point&) = default;
};

inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }

struct Quad {
  std::array<Point, 4> v{};

  double signed_area() const;
  double area() const;
  friend bool operator==(const Quad&, const Quad&) = default;
};

struct RBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double theta = 0.0;

  double area() const { return w * h; }
  Point center() const { return {cx, cy}; }
};

struct PixelGeometry {
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;
  double left = 0.0;
  double theta = 0.0;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kQuarterPi = kPi / 4.0;

// Signed shoelace area; positive for clockwise-on-screen polygons.
double signed_area(std::span<const Point> poly);

// Reorders four points to clockwise winding starting at the top-left-most
// vertex (smallest x + y, ties broken by smaller y). Does not validate.
Quad order_quad(const std::array<Point, 4>& pts);

// True when the quad is simple (no crossing edges) and has positive area
// under the clockwise convention.
bool is_valid_quad(const Quad& q);

// Andrew's monotone chain, returned clockwise-on-screen with collinear points
// dropped.
std::vector<Point> convex_hull(std::span<const Point> pts);

// Maps theta into [-pi/4, pi/4], swapping w and h as needed so the same
// rectangle is described. A box at exactly -pi/4 is rewritten at +pi/4.
RBox canonicalize(const RBox& r);

RBox min_area_rect(const Quad& q);
RBox min_area_rect(std::span<const Point> pts);

Quad rbox_to_quad(const RBox& r);

bool contains(const RBox& r, Point p);

PixelGeometry encode_pixel_geometry(const RBox& r, Point p);
RBox decode_pixel_geometry(Point p, const PixelGeometry& g);

// Sutherland-Hodgman clipping of `subject` against convex `clip`. Both must be
// clockwise-on-screen.
std::vector<Point> clip_convex(std::span<const Point> subject, std::span<const Point> clip);

double polygon_intersection_area(const Quad& a, const Quad& b);
double convex_polygon_iou(std::span<const Point> a, std::span<const Point> b);

// IoU of two quads; non-convex input is replaced by its convex hull.
double quad_iou(const Quad& a, const Quad& b);

double rotated_iou(const RBox& a, const RBox& b);

// Even-odd point-in-polygon test, usable on non-convex quads.
bool point_in_polygon(std::span<const Point> poly, Point p);

}  // namespace rfbtd
