#pragma once

#include <random>
#include <vector>

#include "fleetsim/geometry.hpp"
#include "fleetsim/world.hpp"

namespace fleetsim {

using Rng = std::mt19937_64;

struct LidarSpec {
  int beam_count = 360;
  double fov = 2.0 * std::numbers::pi;
  double max_range = 20.0;
  double range_noise_sigma = 0.01;

  /// Beams are evenly spaced over the fov and symmetric about the heading:
  /// beam i sits at (2i + 1 - N) * fov / (2N).
  double beam_angle(int i) const { return (2.0 * i + 1.0 - beam_count) * fov / (2.0 * beam_count); }
  void validate() const;
};

struct Beam {
  double angle;  // relative to the sensor heading
  double range;
  bool hit;
};

struct Scan {
  Pose2D pose_at_capture;  // ground truth; not for estimation consumers
  std::vector<Beam> beams;
  double timestamp = 0.0;
  double fov = 2.0 * std::numbers::pi;
  double max_range = 0.0;

  /// Hit points in the sensor frame.
  std::vector<Vec2> hit_points() const;
  std::size_t hit_count() const;
  double angular_increment() const { return beams.empty() ? 0.0 : fov / static_cast<double>(beams.size()); }
};

struct CameraSpec {
  double fov = 0.2;
  double max_effective_range = 10.0;
  double ambient_level = 40.0;
  double gain = 1200.0;
  double min_distance = 0.5;

  void validate() const;
};

struct IntensityReading {
  double mean_gray = 0.0;
  Pose2D camera_pose;  // world frame
  double timestamp = 0.0;
};

/// Arm reduced to a pan joint and a radial offset: the camera sits `offset`
/// metres out along the pan direction and looks along it.
inline Pose2D camera_mount_pose(double pan, double offset) {
  return {offset * std::cos(pan), offset * std::sin(pan), pan};
}

/// Planar lidar. The noise draws come from `rng` in beam order (one draw per
/// beam, hit or not) so equal generator states give identical scans.
Scan simulate_lidar(const WorldModel& world, const Pose2D& sensor_pose, const LidarSpec& spec,
                    Rng& rng, double timestamp = 0.0);

/// Mean grayscale value of the fixed-exposure camera channel.
IntensityReading simulate_camera_intensity(const WorldModel& world, const Pose2D& camera_pose,
                                           const CameraSpec& spec, double timestamp = 0.0);

/// Keeps only beams whose |angle| <= half_fov; the fov shrinks to the span
/// the kept beams cover.
Scan crop_scan(const Scan& scan, double half_fov);

}  // namespace fleetsim
