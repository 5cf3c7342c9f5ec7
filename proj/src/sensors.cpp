#include "fleetsim/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fleetsim/kernels.hpp"

namespace fleetsim {

void LidarSpec::validate() const {
  if (beam_count <= 1) throw std::invalid_argument("lidar beam_count must be > 1");
  if (!(fov > 0.0 && fov <= 2.0 * std::numbers::pi)) throw std::invalid_argument("lidar fov out of range");
  if (!(max_range > 0.0)) throw std::invalid_argument("lidar max_range must be positive");
  if (!(range_noise_sigma >= 0.0)) throw std::invalid_argument("lidar noise sigma must be >= 0");
}

void CameraSpec::validate() const {
  if (!(fov > 0.0 && fov < std::numbers::pi)) throw std::invalid_argument("camera fov out of range");
  if (!(ambient_level >= 0.0 && ambient_level < 255.0))
    throw std::invalid_argument("camera ambient level out of range");
  if (!(min_distance > 0.0)) throw std::invalid_argument("camera min_distance must be positive");
  if (!(max_effective_range > 0.0)) throw std::invalid_argument("camera range must be positive");
}

std::vector<Vec2> Scan::hit_points() const {
  std::vector<Vec2> pts;
  pts.reserve(beams.size());
  for (const auto& b : beams)
    if (b.hit) pts.push_back({b.range * std::cos(b.angle), b.range * std::sin(b.angle)});
  return pts;
}

std::size_t Scan::hit_count() const {
  return static_cast<std::size_t>(std::count_if(beams.begin(), beams.end(), [](const Beam& b) { return b.hit; }));
}

Scan simulate_lidar(const WorldModel& world, const Pose2D& sensor_pose, const LidarSpec& spec, Rng& rng,
                    double timestamp) {
  const auto n = static_cast<std::size_t>(spec.beam_count);
  std::vector<double> angles(n), dist(n);
  for (std::size_t i = 0; i < n; ++i) angles[i] = spec.beam_angle(static_cast<int>(i));

  kernels::cast_beams(world, sensor_pose, angles, spec.max_range, dist);

  Scan scan;
  scan.pose_at_capture = sensor_pose;
  scan.timestamp = timestamp;
  scan.fov = spec.fov;
  scan.max_range = spec.max_range;
  scan.beams.resize(n);

  std::normal_distribution<double> noise(0.0, 1.0);
  // Smallest reported range; keeps noisy hits strictly positive.
  constexpr double min_range = 1e-3;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = noise(rng);
    Beam& b = scan.beams[i];
    b.angle = angles[i];
    if (std::isfinite(dist[i])) {
      b.hit = true;
      b.range = std::clamp(dist[i] + spec.range_noise_sigma * z, min_range, spec.max_range);
    } else {
      b.hit = false;
      b.range = spec.max_range;
    }
  }
  return scan;
}

IntensityReading simulate_camera_intensity(const WorldModel& world, const Pose2D& camera_pose,
                                           const CameraSpec& spec, double timestamp) {
  const Vec2 c = camera_pose.translation();
  double total = spec.ambient_level;
  for (const auto& light : world.lights) {
    if (!light.enabled) continue;
    const Vec2 to = light.position - c;
    const double d = norm(to);
    if (d > spec.max_effective_range) continue;
    if (d > 0.0) {
      const double bearing = angle_difference(std::atan2(to.y, to.x), camera_pose.theta);
      if (std::fabs(bearing) > spec.fov / 2.0) continue;
      const auto hit = world.raycast(c, to * (1.0 / d), d);
      if (hit && hit->distance < d) continue;
    }
    const double floor2 = spec.min_distance * spec.min_distance;
    total += spec.gain * light.power / std::max(d * d, floor2);
  }
  return {std::clamp(total, 0.0, 255.0), camera_pose, timestamp};
}

Scan crop_scan(const Scan& scan, double half_fov) {
  Scan out = scan;
  out.beams.clear();
  for (const auto& b : scan.beams)
    if (std::fabs(b.angle) <= half_fov) out.beams.push_back(b);
  out.fov = scan.angular_increment() * static_cast<double>(out.beams.size());
  return out;
}

}  // namespace fleetsim
