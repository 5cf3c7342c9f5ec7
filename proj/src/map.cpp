#include "fleetsim/map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace fleetsim {

static_assert(std::endian::native == std::endian::little, "map export assumes a little-endian host");

void PointCloud::validate() const {
  if (descriptors && descriptors->size() != points.size())
    throw std::invalid_argument("descriptor count does not match point count");
}

namespace {

std::int64_t pack_voxel(Vec2 p, double voxel) {
  const auto ix = static_cast<std::int64_t>(std::floor(p.x / voxel));
  const auto iy = static_cast<std::int64_t>(std::floor(p.y / voxel));
  return (ix << 32) ^ (iy & 0xffffffffLL);
}

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  PointCloud out;
  out.frame_id = cloud.frame_id;
  if (cloud.descriptors) out.descriptors.emplace();
  std::unordered_set<std::int64_t> seen;
  seen.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!seen.insert(pack_voxel(cloud.points[i], voxel)).second) continue;
    out.points.push_back(cloud.points[i]);
    if (cloud.descriptors) out.descriptors->push_back((*cloud.descriptors)[i]);
  }
  return out;
}

PointCloud transform_cloud(const PointCloud& cloud, const Transform2D& t, std::string frame_id) {
  PointCloud out;
  out.frame_id = std::move(frame_id);
  out.descriptors = cloud.descriptors;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
  return out;
}

AnnotatedMap::AnnotatedMap(std::string origin_frame, double voxel, double search_cell)
    : origin_frame_(std::move(origin_frame)), voxel_(voxel), grid_(search_cell) {
  if (!(voxel > 0.0)) throw std::invalid_argument("map voxel must be positive");
}

std::int64_t AnnotatedMap::voxel_key(Vec2 p) const { return pack_voxel(p, voxel_); }

std::pair<std::size_t, bool> AnnotatedMap::insert(Vec2 p, double descriptor) {
  const auto [it, inserted] = voxels_.try_emplace(voxel_key(p), points_.size());
  if (!inserted) return {it->second, false};
  points_.push_back(p);
  descriptors_.push_back(descriptor);
  grid_.insert(p);
  return {it->second, true};
}

std::optional<std::size_t> AnnotatedMap::find(Vec2 p) const {
  auto it = voxels_.find(voxel_key(p));
  if (it == voxels_.end()) return std::nullopt;
  return it->second;
}

const RadiationAnnotation* AnnotatedMap::annotation(std::size_t i) const {
  auto it = annotations_.find(i);
  return it == annotations_.end() ? nullptr : &it->second;
}

void AnnotatedMap::set_annotation(std::size_t i, const RadiationAnnotation& a) {
  if (i >= points_.size()) throw std::out_of_range("annotation index does not name a map point");
  if (a.level == RadiationLevel::none)
    annotations_.erase(i);
  else
    annotations_[i] = a;
}

PointCloud AnnotatedMap::cloud() const {
  PointCloud c;
  c.points = points_;
  c.descriptors = descriptors_;
  c.frame_id = origin_frame_;
  return c;
}

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("map export truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

constexpr char kMagic[4] = {'F', 'S', 'M', 'P'};

}  // namespace

std::size_t map_header_size(const std::string& origin_frame) { return 4 + 2 + 2 + 4 + 4 + 2 + origin_frame.size(); }

MapRecord encode_record(const AnnotatedMap& map, std::size_t i) {
  MapRecord r;
  r.x = static_cast<float>(map.points()[i].x);
  r.y = static_cast<float>(map.points()[i].y);
  r.descriptor = static_cast<std::uint8_t>(std::clamp(std::lround(map.descriptors()[i]), 0L, 255L));
  if (const auto* a = map.annotation(i)) {
    r.level = static_cast<std::uint8_t>(a->level);
    r.distance_mm = static_cast<std::uint16_t>(std::clamp(std::lround(a->observation_distance * 1000.0), 0L, 65535L));
  }
  return r;
}

std::vector<std::uint8_t> serialize_map(const std::string& origin_frame, double voxel,
                                        std::span<const MapRecord> records) {
  if (origin_frame.size() > 0xffff) throw std::invalid_argument("origin frame name too long");
  std::vector<std::uint8_t> out;
  out.reserve(map_header_size(origin_frame) + records.size() * kMapRecordSize);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put<std::uint16_t>(out, kMapFormatVersion);
  put<std::uint16_t>(out, 0);
  put<float>(out, static_cast<float>(voxel));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(origin_frame.size()));
  out.insert(out.end(), origin_frame.begin(), origin_frame.end());
  for (const auto& r : records) {
    put(out, r.x);
    put(out, r.y);
    put(out, r.descriptor);
    put(out, r.level);
    put(out, r.distance_mm);
  }
  return out;
}

std::vector<std::uint8_t> serialize_map(const AnnotatedMap& map) {
  std::vector<MapRecord> records(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) records[i] = encode_record(map, i);
  return serialize_map(map.origin_frame(), map.voxel(), records);
}

MapFileContents parse_map_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw std::runtime_error("not a map export (bad magic)");
  std::size_t pos = 4;
  const auto version = get<std::uint16_t>(bytes, pos);
  if (version != kMapFormatVersion) throw std::runtime_error("unsupported map export version " + std::to_string(version));
  get<std::uint16_t>(bytes, pos);
  MapFileContents out;
  out.voxel = get<float>(bytes, pos);
  const auto count = get<std::uint32_t>(bytes, pos);
  const auto frame_len = get<std::uint16_t>(bytes, pos);
  if (pos + frame_len > bytes.size()) throw std::runtime_error("map export truncated");
  out.origin_frame.assign(reinterpret_cast<const char*>(bytes.data() + pos), frame_len);
  pos += frame_len;
  if (bytes.size() - pos != static_cast<std::size_t>(count) * kMapRecordSize)
    throw std::runtime_error("map export size does not match point count");
  out.records.resize(count);
  for (auto& r : out.records) {
    r.x = get<float>(bytes, pos);
    r.y = get<float>(bytes, pos);
    r.descriptor = get<std::uint8_t>(bytes, pos);
    r.level = get<std::uint8_t>(bytes, pos);
    r.distance_mm = get<std::uint16_t>(bytes, pos);
    if (r.level > 3) throw std::runtime_error("map export has an invalid annotation level");
  }
  return out;
}

AnnotatedMap deserialize_map(std::span<const std::uint8_t> bytes) {
  const auto file = parse_map_file(bytes);
  AnnotatedMap map(file.origin_frame, file.voxel);
  for (const auto& r : file.records) {
    const auto [idx, inserted] = map.insert({r.x, r.y}, r.descriptor);
    if (inserted && r.level != 0)
      map.set_annotation(idx, {static_cast<RadiationLevel>(r.level), r.distance_mm / 1000.0, 0.0});
  }
  return map;
}

std::string export_map_text(const AnnotatedMap& map) {
  std::ostringstream os;
  os << "# fleetsim map v" << kMapFormatVersion << " frame=" << map.origin_frame() << " voxel=" << map.voxel()
     << " points=" << map.size() << "\n";
  os << "# x y descriptor level distance\n";
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto r = encode_record(map, i);
    os << r.x << ' ' << r.y << ' ' << int(r.descriptor) << ' ' << to_string(static_cast<RadiationLevel>(r.level))
       << ' ' << r.distance_mm / 1000.0 << '\n';
  }
  return os.str();
}

}  // namespace fleetsim
