#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "fleetsim/geometry.hpp"

namespace fleetsim {

struct NeighborMatch {
  std::int64_t index = -1;  // -1: nothing within range
  double dist2 = std::numeric_limits<double>::infinity();
};

/// Uniform grid hash over 2D points for fixed-radius nearest-neighbour
/// queries. Cells are scanned in a fixed order and ties go to the lowest
/// point index, so results do not depend on hash layout.
class PointGrid {
 public:
  explicit PointGrid(double cell_size = 1.0) : cell_(cell_size) {}
  PointGrid(double cell_size, std::span<const Vec2> points);

  void insert(Vec2 p);  // index == size() before the call
  void clear();

  NeighborMatch nearest(Vec2 q, double max_dist) const;

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec2>& points() const { return points_; }
  double cell_size() const { return cell_; }

 private:
  static std::int64_t key(std::int64_t ix, std::int64_t iy) {
    return (ix << 32) ^ (iy & 0xffffffffLL);
  }
  std::int64_t cell_coord(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }

  double cell_;
  std::vector<Vec2> points_;
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> cells_;
};

}  // namespace fleetsim
