#include "fleetsim/radiation.hpp"

#include <cmath>
#include <stdexcept>

namespace fleetsim {

std::string_view to_string(RadiationLevel level) {
  switch (level) {
    case RadiationLevel::none: return "none";
    case RadiationLevel::yellow: return "yellow";
    case RadiationLevel::orange: return "orange";
    case RadiationLevel::red: return "red";
  }
  return "none";
}

bool annotation_supersedes(const RadiationAnnotation& existing, const RadiationAnnotation& incoming,
                           AnnotationRule rule) {
  if (existing.level == RadiationLevel::none) return incoming.level != RadiationLevel::none;
  if (rule == AnnotationRule::max_level && incoming.level != existing.level)
    return incoming.level > existing.level;
  if (incoming.observation_distance != existing.observation_distance)
    return incoming.observation_distance < existing.observation_distance;
  return incoming.observed_at < existing.observed_at;
}

void GeigerConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 255.0)) throw std::invalid_argument("geiger threshold must be in (0, 255)");
  if (!(bin_edges[0] < bin_edges[1] && bin_edges[1] < bin_edges[2]))
    throw std::invalid_argument("geiger bin edges must be strictly increasing");
  if (!(max_projection_range >= bin_edges[2]))
    throw std::invalid_argument("max projection range must cover the last bin edge");
  if (!(fov > 0.0 && fov < 2.0 * std::numbers::pi)) throw std::invalid_argument("geiger fov out of range");
}

std::optional<DetectionTrigger> detect(const IntensityReading& reading, const GeigerConfig& config) {
  if (reading.mean_gray >= config.threshold) return DetectionTrigger{reading};
  return std::nullopt;
}

RadiationLevel bin_level(double distance, const GeigerConfig& config) {
  if (distance < 0.0 || distance > config.max_projection_range)
    throw std::out_of_range("distance outside the projection range");
  if (distance <= config.bin_edges[0]) return RadiationLevel::red;
  if (distance <= config.bin_edges[1]) return RadiationLevel::orange;
  return RadiationLevel::yellow;
}

std::vector<ProjectedPoint> project_detection(const Scan& scan, const Pose2D& camera_in_robot,
                                              const Transform2D& robot_pose_in_map, const GeigerConfig& config,
                                              double time) {
  std::vector<ProjectedPoint> out;
  const Vec2 cam = camera_in_robot.translation();
  for (const auto& b : scan.beams) {
    if (!b.hit) continue;
    const Vec2 p{b.range * std::cos(b.angle), b.range * std::sin(b.angle)};
    const Vec2 rel = p - cam;
    const double d = norm(rel);
    if (d > config.max_projection_range) continue;
    const double bearing = angle_difference(std::atan2(rel.y, rel.x), camera_in_robot.theta);
    if (std::fabs(bearing) > config.fov / 2.0) continue;
    out.push_back({robot_pose_in_map.apply(p), {bin_level(d, config), d, time}});
  }
  return out;
}

std::size_t update_annotations(AnnotatedMap& map, const std::vector<ProjectedPoint>& observations,
                               AnnotationRule rule) {
  std::size_t changed = 0;
  for (const auto& obs : observations) {
    const auto idx = map.find(obs.map_point);
    if (!idx) continue;
    const auto* existing = map.annotation(*idx);
    if (existing && !annotation_supersedes(*existing, obs.annotation, rule)) continue;
    map.set_annotation(*idx, obs.annotation);
    ++changed;
  }
  return changed;
}

}  // namespace fleetsim
