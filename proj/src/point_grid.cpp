#include "fleetsim/point_grid.hpp"

#include <cmath>

namespace fleetsim {

PointGrid::PointGrid(double cell_size, std::span<const Vec2> points) : cell_(cell_size) {
  points_.reserve(points.size());
  for (const auto& p : points) insert(p);
}

void PointGrid::insert(Vec2 p) {
  const auto idx = static_cast<std::uint32_t>(points_.size());
  points_.push_back(p);
  cells_[key(cell_coord(p.x), cell_coord(p.y))].push_back(idx);
}

void PointGrid::clear() {
  points_.clear();
  cells_.clear();
}

NeighborMatch PointGrid::nearest(Vec2 q, double max_dist) const {
  NeighborMatch best;
  if (points_.empty()) return best;
  const auto reach = static_cast<std::int64_t>(std::ceil(max_dist / cell_));
  const std::int64_t cx = cell_coord(q.x), cy = cell_coord(q.y);
  for (std::int64_t ix = cx - reach; ix <= cx + reach; ++ix) {
    for (std::int64_t iy = cy - reach; iy <= cy + reach; ++iy) {
      auto it = cells_.find(key(ix, iy));
      if (it == cells_.end()) continue;
      for (const std::uint32_t i : it->second) {
        const Vec2 d = points_[i] - q;
        const double d2 = dot(d, d);
        if (d2 < best.dist2 || (d2 == best.dist2 && static_cast<std::int64_t>(i) < best.index)) {
          best.dist2 = d2;
          best.index = i;
        }
      }
    }
  }
  if (best.dist2 > max_dist * max_dist) return {};
  return best;
}

}  // namespace fleetsim
