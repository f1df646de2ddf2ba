#pragma once

#include <cmath>

namespace hf {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double xx, double yy) : x(xx), y(yy) {}

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator-() const { return {-x, -y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  Vec2& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
  bool operator==(const Vec2&) const = default;
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm2(Vec2 v) { return v.x * v.x + v.y * v.y; }
inline double norm(Vec2 v) { return std::sqrt(norm2(v)); }
inline Vec2 normalized(Vec2 v) {
  double n = norm(v);
  return n > 0 ? v / n : Vec2{0, 0};
}
// Quarter turns. rot90ccw is the matrix J: J*(1,0) = (0,1).
inline Vec2 rot90ccw(Vec2 v) { return {-v.y, v.x}; }
inline Vec2 rot90cw(Vec2 v) { return {v.y, -v.x}; }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }

// Symmetric 2x2 matrices show up as Hessians; keep the general form anyway.
struct Mat2 {
  double a00 = 0, a01 = 0, a10 = 0, a11 = 0;

  Mat2 operator+(const Mat2& o) const {
    return {a00 + o.a00, a01 + o.a01, a10 + o.a10, a11 + o.a11};
  }
  Mat2 operator*(double s) const { return {a00 * s, a01 * s, a10 * s, a11 * s}; }
  Vec2 apply(Vec2 v) const { return {a00 * v.x + a01 * v.y, a10 * v.x + a11 * v.y}; }
  double trace() const { return a00 + a11; }
};

inline Mat2 outer(Vec2 a, Vec2 b) {
  return {a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y};
}

// Distance from p to the segment [a, b].
inline double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 ab = b - a;
  double t = norm2(ab) > 0 ? dot(p - a, ab) / norm2(ab) : 0.0;
  if (t < 0) t = 0;
  if (t > 1) t = 1;
  return dist(p, a + ab * t);
}

}  // namespace hf
