#pragma once

#include <algorithm>
#include <optional>

#include "fleetsim/geometry.hpp"
#include "fleetsim/predicates.hpp"

namespace fleetsim {

/// Distance along a unit ray (origin, dir) to the closed segment a-b, or none.
/// The hit/miss decision uses exact predicates; only the distance is rounded.
inline std::optional<double> ray_segment_distance(Vec2 origin, Vec2 dir, Vec2 a, Vec2 b) {
  const int side_a = predicates::side_of_ray(origin, dir, a);
  const int side_b = predicates::side_of_ray(origin, dir, b);
  if (side_a * side_b > 0) return std::nullopt;

  if (side_a == 0 && side_b == 0) {
    // Segment lies on the ray's supporting line.
    const double ta = dot(a - origin, dir);
    const double tb = dot(b - origin, dir);
    if (std::max(ta, tb) < 0.0) return std::nullopt;
    return std::max(0.0, std::min(ta, tb));
  }

  const int denom_sign = predicates::cross_sign(dir, a, b);
  const int numer_sign = predicates::orient(origin, a, b);
  if (numer_sign != 0 && numer_sign != denom_sign) return std::nullopt;  // behind origin

  const Vec2 s = b - a;
  const double t = cross(a - origin, s) / cross(dir, s);
  return std::max(0.0, t);
}

}  // namespace fleetsim
