#include "fleetsim/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fleetsim/predicates.hpp"
#include "fleetsim/ray.hpp"

namespace fleetsim {

namespace pred = predicates;

bool LabeledPolygon::contains(Vec2 p) const {
  // Even-odd rule.
  bool inside = false;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = vertices[i], b = vertices[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

std::optional<Hit> WorldModel::raycast(Vec2 origin, Vec2 direction, double max_range) const {
  std::optional<Hit> best;
  // Box around the reachable part of the ray, padded so rounding in the end
  // point can never exclude a segment the exact test would accept.
  const Vec2 end = origin + direction * max_range;
  const double pad = 1e-6 * (1.0 + max_range + std::fabs(origin.x) + std::fabs(origin.y));
  const double lo_x = std::min(origin.x, end.x) - pad, hi_x = std::max(origin.x, end.x) + pad;
  const double lo_y = std::min(origin.y, end.y) - pad, hi_y = std::max(origin.y, end.y) + pad;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (!s.opaque) continue;
    if (std::max(s.a.x, s.b.x) < lo_x || std::min(s.a.x, s.b.x) > hi_x || std::max(s.a.y, s.b.y) < lo_y ||
        std::min(s.a.y, s.b.y) > hi_y)
      continue;
    const auto t = ray_segment_distance(origin, direction, s.a, s.b);
    if (!t || *t > max_range) continue;
    if (!best || *t < best->distance) best = Hit{*t, i};
  }
  return best;
}

namespace {

// Does the open segment a-b (its endpoints excluded) touch the closed wall w1-w2?
bool crosses_open(Vec2 a, Vec2 b, Vec2 w1, Vec2 w2) {
  if (!pred::segments_intersect(a, b, w1, w2)) return false;
  const int oa = pred::orient(w1, w2, a);
  const int ob = pred::orient(w1, w2, b);
  if (oa != 0 || ob != 0) {
    // Not collinear: the contact is a single point. It is an endpoint of a-b
    // exactly when that endpoint lies on the wall's supporting line.
    return oa != 0 && ob != 0;
  }
  // Collinear overlap: count unless the overlap is only a or only b.
  const bool along_x = a.x != b.x;
  auto key = [&](Vec2 p) { return along_x ? p.x : p.y; };
  double lo_ab = key(a), hi_ab = key(b);
  if (lo_ab > hi_ab) std::swap(lo_ab, hi_ab);
  double lo_w = key(w1), hi_w = key(w2);
  if (lo_w > hi_w) std::swap(lo_w, hi_w);
  const double lo = std::max(lo_ab, lo_w), hi = std::min(hi_ab, hi_w);
  if (lo < hi) return true;
  return lo != lo_ab && lo != hi_ab;
}

}  // namespace

double WorldModel::walls_between(Vec2 a, Vec2 b) const {
  double total = 0.0;
  for (const auto& s : segments) {
    if (s.radio_attenuation == 0.0) continue;
    if (crosses_open(a, b, s.a, s.b)) total += s.radio_attenuation;
  }
  return total;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, a + ab * t);
}

double WorldModel::clearance(Vec2 p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : segments) {
    if (!s.opaque) continue;
    best = std::min(best, point_segment_distance(p, s.a, s.b));
  }
  return best;
}

std::vector<const LabeledPolygon*> WorldModel::regions_labeled(RegionLabel label) const {
  std::vector<const LabeledPolygon*> out;
  for (const auto& r : regions)
    if (r.label == label) out.push_back(&r);
  return out;
}

// ---------------------------------------------------------------------------
// Loading

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ScenarioError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ScenarioError(path + "/" + key, "missing required field");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ScenarioError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ScenarioError(path, "must be finite");
  return d;
}

Vec2 point(const json& v, const std::string& path) {
  if (v.is_array() && v.size() == 2)
    return {number(v[0], path + "/0"), number(v[1], path + "/1")};
  if (v.is_object())
    return {number(require(v, "x", path), path + "/x"), number(require(v, "y", path), path + "/y")};
  throw ScenarioError(path, "expected a point [x, y]");
}

const json& array_field(const json& obj, const char* key, const std::string& path) {
  static const json empty = json::array();
  auto it = obj.find(key);
  if (it == obj.end()) return empty;
  if (!it->is_array()) throw ScenarioError(path + "/" + key, "expected an array");
  return *it;
}

bool polygon_is_simple(const std::vector<Vec2>& v) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a1 = v[i], a2 = v[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (pred::segments_intersect(a1, a2, v[j], v[(j + 1) % n])) return false;
    }
  }
  return true;
}

}  // namespace

WorldModel load_world(const json& doc, const std::string& base) {
  WorldModel w;
  const json& b = require(doc, "bounds", base);
  w.bounds.min = point(require(b, "min", base + "/bounds"), base + "/bounds/min");
  w.bounds.max = point(require(b, "max", base + "/bounds"), base + "/bounds/max");
  if (!(w.bounds.min.x < w.bounds.max.x && w.bounds.min.y < w.bounds.max.y))
    throw ScenarioError(base + "/bounds", "bounds must have min < max");

  auto check_in_bounds = [&](Vec2 p, const std::string& path) {
    if (!w.bounds.contains(p)) throw ScenarioError(path, "point lies outside world bounds");
  };

  const json& segs = array_field(doc, "segments", base);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const std::string p = base + "/segments/" + std::to_string(i);
    WallSegment s;
    s.a = point(require(segs[i], "a", p), p + "/a");
    s.b = point(require(segs[i], "b", p), p + "/b");
    if (s.a == s.b) throw ScenarioError(p, "degenerate segment");
    if (auto it = segs[i].find("radio_attenuation"); it != segs[i].end())
      s.radio_attenuation = number(*it, p + "/radio_attenuation");
    if (s.radio_attenuation < 0.0)
      throw ScenarioError(p + "/radio_attenuation", "must be non-negative");
    if (auto it = segs[i].find("opaque"); it != segs[i].end()) {
      if (!it->is_boolean()) throw ScenarioError(p + "/opaque", "expected a boolean");
      s.opaque = it->get<bool>();
    }
    check_in_bounds(s.a, p + "/a");
    check_in_bounds(s.b, p + "/b");
    w.segments.push_back(s);
  }

  const json& lights = array_field(doc, "lights", base);
  for (std::size_t i = 0; i < lights.size(); ++i) {
    const std::string p = base + "/lights/" + std::to_string(i);
    LightSource l;
    l.position = point(require(lights[i], "position", p), p + "/position");
    if (auto it = lights[i].find("power"); it != lights[i].end()) l.power = number(*it, p + "/power");
    if (!(l.power > 0.0)) throw ScenarioError(p + "/power", "must be positive");
    if (auto it = lights[i].find("enabled"); it != lights[i].end()) {
      if (!it->is_boolean()) throw ScenarioError(p + "/enabled", "expected a boolean");
      l.enabled = it->get<bool>();
    }
    check_in_bounds(l.position, p + "/position");
    w.lights.push_back(l);
  }

  const json& regions = array_field(doc, "regions", base);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const std::string p = base + "/regions/" + std::to_string(i);
    LabeledPolygon poly;
    if (auto it = regions[i].find("name"); it != regions[i].end() && it->is_string())
      poly.name = it->get<std::string>();
    const json& label = require(regions[i], "label", p);
    if (label == "indoor")
      poly.label = RegionLabel::indoor;
    else if (label == "outdoor")
      poly.label = RegionLabel::outdoor;
    else
      throw ScenarioError(p + "/label", "expected \"indoor\" or \"outdoor\"");
    const json& verts = require(regions[i], "vertices", p);
    if (!verts.is_array() || verts.size() < 3)
      throw ScenarioError(p + "/vertices", "polygon needs at least 3 vertices");
    for (std::size_t k = 0; k < verts.size(); ++k) {
      const std::string vp = p + "/vertices/" + std::to_string(k);
      poly.vertices.push_back(point(verts[k], vp));
      check_in_bounds(poly.vertices.back(), vp);
    }
    if (!polygon_is_simple(poly.vertices)) throw ScenarioError(p, "polygon is self-intersecting");
    w.regions.push_back(std::move(poly));
  }
  return w;
}

WorldModel load_world_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError("", std::string("invalid JSON: ") + e.what());
  }
  if (doc.contains("world")) return load_world(doc["world"], "/world");
  return load_world(doc, "");
}

}  // namespace fleetsim
