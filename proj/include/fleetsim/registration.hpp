#pragma once

#include <span>
#include <vector>

#include "fleetsim/map.hpp"

namespace fleetsim {

struct IcpParams {
  int max_iterations = 50;
  double max_correspondence_dist = 1.0;
  double trim_ratio = 0.9;
  double convergence_translation = 1e-4;
  double convergence_rotation = 1e-4;

  void validate() const;
};

enum class IcpStatus { converged, max_iterations, insufficient_overlap };

struct IcpResult {
  Transform2D transform;
  /// Root-mean-square distance over the kept correspondences at the final
  /// transform.
  double mean_residual = 0.0;
  bool converged = false;
  IcpStatus status = IcpStatus::max_iterations;
  int iterations = 0;
  std::size_t kept = 0;
  /// Residual at the start of every iteration, followed by the final one.
  std::vector<double> residual_history;
};

/// Point-to-point ICP with trimming. The returned transform maps source
/// coordinates into the target frame.
IcpResult icp_register(std::span<const Vec2> source, const PointGrid& target, const Transform2D& initial,
                       const IcpParams& params);

IcpResult icp_register(const PointCloud& source, const PointCloud& target, const Transform2D& initial,
                       const IcpParams& params);

/// Inserts scan points (scan frame) into the map at `pose` (scan -> map).
/// Existing points and annotations are left untouched. Returns the number of
/// new points.
std::size_t update_map(AnnotatedMap& map, const PointCloud& scan_cloud, const Transform2D& pose);

struct RelocalizeParams {
  int grid_steps = 1;          // positions at -steps..steps along each axis
  double grid_spacing = 1.0;   // m
  int heading_count = 8;       // evenly spaced over the full circle
  double accept_residual = 0.15;
  double min_inlier_fraction = 0.6;
  double inlier_distance = 0.3;
  double max_offset = 5.0;     // candidates ending farther from the guess are discarded
  IcpParams icp;
  bool parallel = true;
};

struct RelocalizeResult {
  bool success = false;
  Transform2D pose;           // best candidate, scan -> map
  double residual = 0.0;      // best residual found (operator feedback on failure)
  double inlier_fraction = 0.0;
  int candidates = 0;
};

/// Multi-start ICP around an operator's coarse guess.
RelocalizeResult relocalize(const AnnotatedMap& map, const PointCloud& scan_cloud, const Transform2D& coarse_guess,
                            const RelocalizeParams& params = {});

/// Folds `incoming` into `global` through `incoming_to_global`. Annotations are
/// transformed with their points and combined under `rule`.
void merge_maps(AnnotatedMap& global, const AnnotatedMap& incoming, const Transform2D& incoming_to_global,
                AnnotationRule rule = AnnotationRule::closer_wins);

}  // namespace fleetsim
