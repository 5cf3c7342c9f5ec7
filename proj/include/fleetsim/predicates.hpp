#pragma once

#include <span>

#include "fleetsim/geometry.hpp"

namespace fleetsim::predicates {

/// One signed product term `sign * a * b` of a sum whose sign is wanted exactly.
struct Term {
  double a;
  double b;
  int sign;
};

/// Exact sign (-1, 0, +1) of sum(sign_i * a_i * b_i). Uses a floating-point
/// filter and falls back to error-free expansion arithmetic near zero.
/// Inputs must be finite and far from overflow/underflow.
int sign_of_sum(std::span<const Term> terms);

/// Exact sign of the orientation of c relative to the directed line a->b.
/// Positive when c lies to the left.
int orient(Vec2 a, Vec2 b, Vec2 c);

/// Exact sign of cross(d, p - o): which side of the line through o with
/// direction d the point p lies on.
int side_of_ray(Vec2 o, Vec2 d, Vec2 p);

/// Exact sign of cross(d, b - a).
int cross_sign(Vec2 d, Vec2 a, Vec2 b);

/// Closed-segment intersection, endpoints inclusive, exact.
bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2);

}  // namespace fleetsim::predicates
