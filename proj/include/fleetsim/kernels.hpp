#pragma once

// Data-parallel inner loops. Each kernel has an OpenMP implementation and a
// serial reference in `kernels::serial`; both must produce bit-identical
// output, which the kernel tests and the benchmark check.

#include <span>

#include "fleetsim/geometry.hpp"
#include "fleetsim/point_grid.hpp"
#include "fleetsim/world.hpp"

namespace fleetsim::kernels {

/// Ray distance per beam from `pose`; beam i points at pose.theta + angles[i].
/// Misses are written as +infinity.
void cast_beams(const WorldModel& world, const Pose2D& pose, std::span<const double> angles,
                double max_range, std::span<double> out);

/// For each query (already transformed), its nearest grid point within max_dist.
void nearest_neighbors(const PointGrid& grid, std::span<const Vec2> queries, double max_dist,
                       std::span<NeighborMatch> out);

namespace serial {

void cast_beams(const WorldModel& world, const Pose2D& pose, std::span<const double> angles,
                double max_range, std::span<double> out);

void nearest_neighbors(const PointGrid& grid, std::span<const Vec2> queries, double max_dist,
                       std::span<NeighborMatch> out);

}  // namespace serial

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace fleetsim::kernels
