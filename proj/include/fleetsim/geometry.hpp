#pragma once

#include <cmath>
#include <numbers>

namespace fleetsim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::remainder(a, two_pi);  // [-pi, pi]
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

/// Rigid planar transform. Applied to a point p it yields R(theta) p + (x, y),
/// i.e. it maps coordinates of the child frame into the parent frame.
struct Transform2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Transform2D() = default;
  Transform2D(double x_, double y_, double theta_) : x(x_), y(y_), theta(normalize_angle(theta_)) {}

  static Transform2D identity() { return {}; }

  Vec2 translation() const { return {x, y}; }

  Vec2 apply(Vec2 p) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * p.x - s * p.y + x, s * p.x + c * p.y + y};
  }

  Vec2 rotate(Vec2 v) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
  }

  /// this ∘ other: first apply `other`, then `this`.
  Transform2D operator*(const Transform2D& other) const {
    const Vec2 t = apply(other.translation());
    return {t.x, t.y, theta + other.theta};
  }

  Transform2D inverse() const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {-(c * x + s * y), s * x - c * y, -theta};
  }
};

/// A pose is a transform from the body frame into the frame it is expressed in.
using Pose2D = Transform2D;

inline double angle_difference(double a, double b) { return normalize_angle(a - b); }

}  // namespace fleetsim
