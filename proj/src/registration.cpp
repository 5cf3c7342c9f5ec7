#include "fleetsim/registration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fleetsim/kernels.hpp"

namespace fleetsim {

void IcpParams::validate() const {
  if (max_iterations <= 0 || !(max_correspondence_dist > 0.0) || !(trim_ratio > 0.0 && trim_ratio <= 1.0) ||
      !(convergence_translation > 0.0) || !(convergence_rotation > 0.0))
    throw std::invalid_argument("invalid ICP parameters");
}

namespace {

struct Pair {
  std::uint32_t src;
  std::uint32_t dst;
  double dist2;
};

// Correspondences at `t`, trimmed to the best trim_ratio fraction, ordered by
// (distance, source index).
std::vector<Pair> correspondences(std::span<const Vec2> source, const PointGrid& target, const Transform2D& t,
                                  const IcpParams& params, std::vector<Vec2>& moved,
                                  std::vector<NeighborMatch>& matches) {
  for (std::size_t i = 0; i < source.size(); ++i) moved[i] = t.apply(source[i]);
  kernels::nearest_neighbors(target, moved, params.max_correspondence_dist, matches);
  std::vector<Pair> pairs;
  pairs.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i)
    if (matches[i].index >= 0)
      pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(matches[i].index), matches[i].dist2});
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.src < b.src;
  });
  const auto keep = static_cast<std::size_t>(std::floor(params.trim_ratio * static_cast<double>(pairs.size())));
  pairs.resize(std::min(pairs.size(), keep));
  return pairs;
}

double rms(const std::vector<Pair>& pairs) {
  double sum = 0.0;
  for (const auto& p : pairs) sum += p.dist2;
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

// Closed-form least-squares rigid alignment of moved[src] onto target[dst].
Transform2D solve_rigid(const std::vector<Pair>& pairs, const std::vector<Vec2>& moved,
                        const std::vector<Vec2>& target) {
  const double n = static_cast<double>(pairs.size());
  Vec2 mp{}, mq{};
  for (const auto& p : pairs) {
    mp = mp + moved[p.src];
    mq = mq + target[p.dst];
  }
  mp = mp * (1.0 / n);
  mq = mq * (1.0 / n);
  double s_dot = 0.0, s_cross = 0.0;
  for (const auto& p : pairs) {
    const Vec2 a = moved[p.src] - mp;
    const Vec2 b = target[p.dst] - mq;
    s_dot += dot(a, b);
    s_cross += cross(a, b);
  }
  const double theta = std::atan2(s_cross, s_dot);
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec2 rotated{c * mp.x - s * mp.y, s * mp.x + c * mp.y};
  return {mq.x - rotated.x, mq.y - rotated.y, theta};
}

}  // namespace

IcpResult icp_register(std::span<const Vec2> source, const PointGrid& target, const Transform2D& initial,
                       const IcpParams& params) {
  params.validate();
  if (source.size() < 3 || target.size() < 3)
    throw std::invalid_argument("icp_register needs at least 3 points in source and target");

  IcpResult result;
  result.transform = initial;
  std::vector<Vec2> moved(source.size());
  std::vector<NeighborMatch> matches(source.size());

  for (int iter = 1; iter <= params.max_iterations; ++iter) {
    const auto pairs = correspondences(source, target, result.transform, params, moved, matches);
    result.iterations = iter;
    if (pairs.size() < 3) {
      result.status = IcpStatus::insufficient_overlap;
      result.converged = false;
      result.mean_residual = result.residual_history.empty() ? INFINITY : result.residual_history.back();
      return result;
    }
    result.residual_history.push_back(rms(pairs));
    const Transform2D delta = solve_rigid(pairs, moved, target.points());
    result.transform = delta * result.transform;
    if (std::hypot(delta.x, delta.y) < params.convergence_translation &&
        std::fabs(delta.theta) < params.convergence_rotation) {
      result.converged = true;
      result.status = IcpStatus::converged;
      break;
    }
  }

  const auto final_pairs = correspondences(source, target, result.transform, params, moved, matches);
  if (final_pairs.size() < 3) {
    result.status = IcpStatus::insufficient_overlap;
    result.converged = false;
    result.mean_residual = result.residual_history.back();
    return result;
  }
  result.kept = final_pairs.size();
  result.mean_residual = rms(final_pairs);
  result.residual_history.push_back(result.mean_residual);
  return result;
}

IcpResult icp_register(const PointCloud& source, const PointCloud& target, const Transform2D& initial,
                       const IcpParams& params) {
  params.validate();
  const PointGrid grid(params.max_correspondence_dist, target.points);
  return icp_register(source.points, grid, initial, params);
}

std::size_t update_map(AnnotatedMap& map, const PointCloud& scan_cloud, const Transform2D& pose) {
  scan_cloud.validate();
  std::size_t added = 0;
  for (std::size_t i = 0; i < scan_cloud.size(); ++i)
    if (map.insert(pose.apply(scan_cloud.points[i]), scan_cloud.descriptor(i)).second) ++added;
  return added;
}

namespace {

double inlier_fraction(const AnnotatedMap& map, std::span<const Vec2> scan, const Transform2D& pose, double radius) {
  std::size_t inliers = 0;
  for (const auto& p : scan)
    if (map.search_grid().nearest(pose.apply(p), radius).index >= 0) ++inliers;
  return static_cast<double>(inliers) / static_cast<double>(scan.size());
}

}  // namespace

RelocalizeResult relocalize(const AnnotatedMap& map, const PointCloud& scan_cloud, const Transform2D& coarse_guess,
                            const RelocalizeParams& params) {
  if (map.empty()) throw std::invalid_argument("relocalize needs a non-empty map");
  if (scan_cloud.size() < 3) throw std::invalid_argument("relocalize needs at least 3 scan points");
  params.icp.validate();

  // The map's own search grid is keyed at its configured cell size; rebuild
  // one at the correspondence distance when they differ.
  const PointGrid* grid = &map.search_grid();
  PointGrid rebuilt;
  if (map.search_grid().cell_size() != params.icp.max_correspondence_dist) {
    rebuilt = PointGrid(params.icp.max_correspondence_dist, map.points());
    grid = &rebuilt;
  }

  std::vector<Transform2D> starts;
  const double heading_step = 2.0 * std::numbers::pi / params.heading_count;
  for (int h = 0; h < params.heading_count; ++h)
    for (int ix = -params.grid_steps; ix <= params.grid_steps; ++ix)
      for (int iy = -params.grid_steps; iy <= params.grid_steps; ++iy)
        starts.emplace_back(coarse_guess.x + ix * params.grid_spacing, coarse_guess.y + iy * params.grid_spacing,
                            coarse_guess.theta + h * heading_step);

  const auto n = static_cast<std::ptrdiff_t>(starts.size());
  std::vector<IcpResult> results(starts.size());
  std::vector<double> inliers(starts.size(), 0.0);
  const std::span<const Vec2> scan(scan_cloud.points);
#pragma omp parallel for schedule(dynamic) if (params.parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    results[i] = icp_register(scan, *grid, starts[i], params.icp);
    if (results[i].status != IcpStatus::insufficient_overlap)
      inliers[i] = inlier_fraction(map, scan, results[i].transform, params.inlier_distance);
  }

  // Lowest residual among candidates with enough overlap; a start that locks
  // onto a handful of points can otherwise win with a tiny residual.
  RelocalizeResult out;
  out.candidates = static_cast<int>(starts.size());
  out.residual = INFINITY;
  std::ptrdiff_t best = -1;
  for (const bool require_overlap : {true, false}) {
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (results[i].status == IcpStatus::insufficient_overlap) continue;
      if (distance(results[i].transform.translation(), coarse_guess.translation()) > params.max_offset) continue;
      if (require_overlap && !(inliers[i] > params.min_inlier_fraction)) continue;
      if (results[i].mean_residual < out.residual) {
        out.residual = results[i].mean_residual;
        best = i;
      }
    }
    if (best >= 0) break;
  }
  if (best < 0) return out;
  out.pose = results[best].transform;
  out.inlier_fraction = inliers[best];
  out.success = out.residual < params.accept_residual && out.inlier_fraction > params.min_inlier_fraction;
  return out;
}

void merge_maps(AnnotatedMap& global, const AnnotatedMap& incoming, const Transform2D& incoming_to_global,
                AnnotationRule rule) {
  for (std::size_t i = 0; i < incoming.size(); ++i) {
    const auto [idx, inserted] =
        global.insert(incoming_to_global.apply(incoming.points()[i]), incoming.descriptors()[i]);
    (void)inserted;
    const auto* a = incoming.annotation(i);
    if (!a) continue;
    const auto* existing = global.annotation(idx);
    if (!existing || annotation_supersedes(*existing, *a, rule)) global.set_annotation(idx, *a);
  }
}

}  // namespace fleetsim
