#include "fleetsim/predicates.hpp"

#include <algorithm>
#include <array>
#include <cfloat>
#include <cmath>
#include <vector>

namespace fleetsim::predicates {
namespace {

// Knuth/Dekker error-free transformations.
inline void two_sum(double a, double b, double& x, double& y) {
  x = a + b;
  const double bv = x - a;
  const double av = x - bv;
  y = (a - av) + (b - bv);
}

inline void two_product(double a, double b, double& x, double& y) {
  x = a * b;
  y = std::fma(a, b, -x);
}

// Adds b into a nonoverlapping expansion e (increasing magnitude), dropping zeros.
void grow_expansion(std::vector<double>& e, double b) {
  double q = b;
  std::size_t out = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    double sum, err;
    two_sum(q, e[i], sum, err);
    q = sum;
    if (err != 0.0) e[out++] = err;
  }
  e.resize(out);
  if (q != 0.0) e.push_back(q);
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

int sign_of_sum(std::span<const Term> terms) {
  double approx = 0.0;
  double magnitude = 0.0;
  for (const auto& t : terms) {
    const double p = t.a * t.b;
    approx += t.sign > 0 ? p : -p;
    magnitude += std::fabs(p);
  }
  const double bound = static_cast<double>(terms.size() + 2) * DBL_EPSILON * magnitude;
  if (approx > bound) return 1;
  if (-approx > bound) return -1;

  std::vector<double> expansion;
  expansion.reserve(terms.size() * 2);
  for (const auto& t : terms) {
    double hi, lo;
    two_product(t.a, t.b, hi, lo);
    if (t.sign < 0) {
      hi = -hi;
      lo = -lo;
    }
    grow_expansion(expansion, lo);
    grow_expansion(expansion, hi);
  }
  return expansion.empty() ? 0 : sign_of(expansion.back());
}

int orient(Vec2 a, Vec2 b, Vec2 c) {
  // (b - a) x (c - a) expanded so every term is a product of raw inputs.
  const std::array<Term, 6> t{{
      {b.x, c.y, +1},
      {b.x, a.y, -1},
      {a.x, c.y, -1},
      {b.y, c.x, -1},
      {b.y, a.x, +1},
      {a.y, c.x, +1},
  }};
  return sign_of_sum(t);
}

int side_of_ray(Vec2 o, Vec2 d, Vec2 p) {
  const std::array<Term, 4> t{{
      {d.x, p.y, +1},
      {d.x, o.y, -1},
      {d.y, p.x, -1},
      {d.y, o.x, +1},
  }};
  return sign_of_sum(t);
}

int cross_sign(Vec2 d, Vec2 a, Vec2 b) { return side_of_ray(a, d, b); }

namespace {

bool on_segment_collinear(Vec2 p, Vec2 q, Vec2 r) {
  // r is known collinear with p-q; check bounding box (exact comparisons).
  return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
         r.y <= std::max(p.y, q.y);
}

}  // namespace

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const int o1 = orient(p1, p2, q1);
  const int o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1);
  const int o4 = orient(q1, q2, p2);
  if (o1 * o2 < 0 && o3 * o4 < 0) return true;
  if (o1 == 0 && on_segment_collinear(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment_collinear(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment_collinear(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment_collinear(q1, q2, p2)) return true;
  return false;
}

}  // namespace fleetsim::predicates
