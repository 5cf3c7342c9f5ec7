#include <cmath>
#include <limits>

#include "fleetsim/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fleetsim::kernels {

void cast_beams(const WorldModel& world, const Pose2D& pose, std::span<const double> angles,
                double max_range, std::span<double> out) {
  const Vec2 origin = pose.translation();
  const auto n = static_cast<std::ptrdiff_t>(angles.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double a = pose.theta + angles[i];
    const auto hit = world.raycast(origin, {std::cos(a), std::sin(a)}, max_range);
    out[i] = hit ? hit->distance : std::numeric_limits<double>::infinity();
  }
}

void nearest_neighbors(const PointGrid& grid, std::span<const Vec2> queries, double max_dist,
                       std::span<NeighborMatch> out) {
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = grid.nearest(queries[i], max_dist);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace fleetsim::kernels
