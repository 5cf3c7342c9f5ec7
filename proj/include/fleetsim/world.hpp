#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fleetsim/geometry.hpp"
#include "json.hpp"

namespace fleetsim {

/// Raised for malformed scenario documents; `path` is a JSON pointer into the
/// offending document.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct WallSegment {
  Vec2 a;
  Vec2 b;
  double radio_attenuation = 0.0;  // dB per crossing
  bool opaque = true;              // blocks lidar and light
};

struct LightSource {
  Vec2 position;
  double power = 1.0;
  bool enabled = true;
};

enum class RegionLabel { indoor, outdoor };

struct LabeledPolygon {
  std::string name;
  RegionLabel label = RegionLabel::outdoor;
  std::vector<Vec2> vertices;

  bool contains(Vec2 p) const;
};

struct Bounds {
  Vec2 min;
  Vec2 max;
  bool contains(Vec2 p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
  }
};

struct Hit {
  double distance;
  std::size_t segment_index;
};

struct WorldModel {
  std::vector<WallSegment> segments;
  std::vector<LightSource> lights;
  std::vector<LabeledPolygon> regions;
  Bounds bounds;

  /// Nearest opaque hit along the ray within max_range; lowest index on ties.
  /// `direction` must have unit norm.
  std::optional<Hit> raycast(Vec2 origin, Vec2 direction, double max_range) const;

  /// Summed radio attenuation of every wall crossed by the open segment a-b.
  double walls_between(Vec2 a, Vec2 b) const;

  /// Shortest distance from p to any opaque segment (infinity when none).
  double clearance(Vec2 p) const;

  std::vector<const LabeledPolygon*> regions_labeled(RegionLabel label) const;
};

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);

/// Parses and validates the `world` object of a scenario document.
/// `base_path` is prefixed to error paths (e.g. "/world").
WorldModel load_world(const nlohmann::json& doc, const std::string& base_path = "/world");

/// Convenience overload taking JSON text.
WorldModel load_world_text(std::string_view text);

}  // namespace fleetsim
