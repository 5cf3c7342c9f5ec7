#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fleetsim/annotation.hpp"
#include "fleetsim/geometry.hpp"
#include "fleetsim/point_grid.hpp"

namespace fleetsim {

struct PointCloud {
  std::vector<Vec2> points;
  std::optional<std::vector<double>> descriptors;  // light intensity, gray units
  std::string frame_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  double descriptor(std::size_t i) const { return descriptors ? (*descriptors)[i] : 0.0; }
  void validate() const;
};

/// First point (in input order) of every occupied voxel survives.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

PointCloud transform_cloud(const PointCloud& cloud, const Transform2D& t, std::string frame_id);

/// Accumulate-only point map, voxel-deduplicated, with a sparse radiation
/// annotation layer and a descriptor per point (0 where none was observed).
class AnnotatedMap {
 public:
  static constexpr double kDefaultVoxel = 0.10;
  static constexpr double kDefaultSearchCell = 1.0;

  explicit AnnotatedMap(std::string origin_frame = "map", double voxel = kDefaultVoxel,
                        double search_cell = kDefaultSearchCell);

  /// Inserts p unless its voxel is occupied. Returns the index of the point
  /// that owns the voxel and whether it was newly inserted.
  std::pair<std::size_t, bool> insert(Vec2 p, double descriptor = 0.0);

  std::optional<std::size_t> find(Vec2 p) const;

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec2>& points() const { return points_; }
  const std::vector<double>& descriptors() const { return descriptors_; }
  const std::map<std::size_t, RadiationAnnotation>& annotations() const { return annotations_; }
  const RadiationAnnotation* annotation(std::size_t i) const;
  void set_annotation(std::size_t i, const RadiationAnnotation& a);

  const std::string& origin_frame() const { return origin_frame_; }
  void set_origin_frame(std::string f) { origin_frame_ = std::move(f); }
  double voxel() const { return voxel_; }
  const PointGrid& search_grid() const { return grid_; }

  PointCloud cloud() const;

 private:
  std::int64_t voxel_key(Vec2 p) const;

  std::string origin_frame_;
  double voxel_;
  std::vector<Vec2> points_;
  std::vector<double> descriptors_;
  std::map<std::size_t, RadiationAnnotation> annotations_;
  std::unordered_map<std::int64_t, std::size_t> voxels_;
  PointGrid grid_;
};

// ---------------------------------------------------------------------------
// Export format, version 1 (little-endian):
//   "FSMP" | u16 version | u16 reserved | f32 voxel | u32 point_count |
//   u16 frame_len | frame bytes
// followed by point_count 12-byte records:
//   f32 x | f32 y | u8 descriptor | u8 level | u16 observation distance (mm)

inline constexpr std::uint16_t kMapFormatVersion = 1;
inline constexpr std::size_t kMapRecordSize = 12;

struct MapRecord {
  float x = 0.0f;
  float y = 0.0f;
  std::uint8_t descriptor = 0;
  std::uint8_t level = 0;
  std::uint16_t distance_mm = 0;

  bool operator==(const MapRecord&) const = default;
};

std::size_t map_header_size(const std::string& origin_frame);
MapRecord encode_record(const AnnotatedMap& map, std::size_t i);
std::vector<std::uint8_t> serialize_map(const std::string& origin_frame, double voxel,
                                        std::span<const MapRecord> records);
std::vector<std::uint8_t> serialize_map(const AnnotatedMap& map);
AnnotatedMap deserialize_map(std::span<const std::uint8_t> bytes);

/// One line per point: "x y descriptor level distance".
std::string export_map_text(const AnnotatedMap& map);

struct MapFileContents {
  std::string origin_frame;
  double voxel = 0.0;
  std::vector<MapRecord> records;
};
MapFileContents parse_map_file(std::span<const std::uint8_t> bytes);

}  // namespace fleetsim
