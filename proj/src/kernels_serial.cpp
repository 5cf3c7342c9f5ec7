#include <cmath>
#include <limits>

#include "fleetsim/kernels.hpp"

namespace fleetsim::kernels::serial {

void cast_beams(const WorldModel& world, const Pose2D& pose, std::span<const double> angles,
                double max_range, std::span<double> out) {
  const Vec2 origin = pose.translation();
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double a = pose.theta + angles[i];
    const auto hit = world.raycast(origin, {std::cos(a), std::sin(a)}, max_range);
    out[i] = hit ? hit->distance : std::numeric_limits<double>::infinity();
  }
}

void nearest_neighbors(const PointGrid& grid, std::span<const Vec2> queries, double max_dist,
                       std::span<NeighborMatch> out) {
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = grid.nearest(queries[i], max_dist);
}

}  // namespace fleetsim::kernels::serial
