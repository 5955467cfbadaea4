#pragma once

#include <array>
#include <cmath>

#include <Eigen/Core>

namespace egopano {

using Mat3 = Eigen::Matrix3d;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Corner order is clockwise from top-left: (0,0), (w,0), (w,h), (0,h).
using Quad = std::array<Vec2, 4>;

inline Vec2 quad_mean(const Quad& q) {
  return {(q[0].x + q[1].x + q[2].x + q[3].x) / 4.0, (q[0].y + q[1].y + q[2].y + q[3].y) / 4.0};
}

// Axis-aligned box in source-frame pixels; x1 < x2 and y1 < y2 when valid.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  bool valid() const { return x1 < x2 && y1 < y2; }
  double area() const { return (x2 - x1) * (y2 - y1); }
  Quad corners() const { return {Vec2{x1, y1}, Vec2{x2, y1}, Vec2{x2, y2}, Vec2{x1, y2}}; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

}  // namespace egopano
