#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fleetsim/annotation.hpp"
#include "fleetsim/map.hpp"
#include "fleetsim/sensors.hpp"

namespace fleetsim {

/// Thresholded camera brightness stands in for a directional Geiger counter.
struct GeigerConfig {
  double threshold = 112.0;  // gray level; 44 % of 255 in an 8-bit image
  double fov = 0.2;          // projection cone, rad
  double max_projection_range = 5.0;
  /// Upper edges of the red and orange bins, then the nominal yellow
  /// distance. Yellow extends to max_projection_range.
  std::array<double, 3> bin_edges{2.0, 3.0, 4.0};
  AnnotationRule rule = AnnotationRule::closer_wins;

  void validate() const;
};

struct DetectionTrigger {
  IntensityReading reading;
};

struct DetectionEvent {
  IntensityReading reading;
  std::size_t annotated_point_count = 0;
  std::string robot_id;
};

struct ProjectedPoint {
  Vec2 map_point;
  RadiationAnnotation annotation;
};

/// Fires when the reading reaches the threshold (inclusive).
std::optional<DetectionTrigger> detect(const IntensityReading& reading, const GeigerConfig& config);

/// Level for a camera-to-point distance in [0, max_projection_range]; right
/// edges inclusive (2.0 m is red, 3.0 m is orange).
RadiationLevel bin_level(double distance, const GeigerConfig& config);

/// Lidar hits of `scan` that fall inside the camera cone and projection range.
/// `camera_in_robot` is the camera mount pose in the scan (robot) frame;
/// results are expressed in the map frame through `robot_pose_in_map`.
std::vector<ProjectedPoint> project_detection(const Scan& scan, const Pose2D& camera_in_robot,
                                              const Transform2D& robot_pose_in_map, const GeigerConfig& config,
                                              double time);

/// Applies new observations point by point under config.rule. Points whose
/// voxel is not in the map are skipped. Returns how many annotations changed.
std::size_t update_annotations(AnnotatedMap& map, const std::vector<ProjectedPoint>& observations,
                               AnnotationRule rule = AnnotationRule::closer_wins);

}  // namespace fleetsim
