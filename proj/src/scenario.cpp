#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fleetsim/station.hpp"

namespace fleetsim {

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ScenarioError(path_, "expected an object");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  std::string at(const char* key) const { return path_ + "/" + key; }
  const json& raw(const char* key) const {
    if (!j_.contains(key)) throw ScenarioError(at(key), "missing required field");
    return j_.at(key);
  }
  Reader child(const char* key) const { return Reader(raw(key), at(key)); }

  double number(const char* key) const {
    const auto& v = raw(key);
    if (!v.is_number()) throw ScenarioError(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ScenarioError(at(key), "must be finite");
    return d;
  }
  void number(const char* key, double& out) const {
    if (has(key)) out = number(key);
  }
  void positive(const char* key, double& out) const {
    if (!has(key)) return;
    out = number(key);
    if (!(out > 0.0)) throw ScenarioError(at(key), "must be positive");
  }
  void integer(const char* key, int& out) const {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_number_integer()) throw ScenarioError(at(key), "expected an integer");
    out = v.get<int>();
  }
  void size(const char* key, std::size_t& out) const {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_number_unsigned()) throw ScenarioError(at(key), "expected a non-negative integer");
    out = v.get<std::size_t>();
  }
  void boolean(const char* key, bool& out) const {
    if (!has(key)) return;
    if (!raw(key).is_boolean()) throw ScenarioError(at(key), "expected a boolean");
    out = raw(key).get<bool>();
  }
  std::string string(const char* key) const {
    const auto& v = raw(key);
    if (!v.is_string()) throw ScenarioError(at(key), "expected a string");
    return v.get<std::string>();
  }
  Vec2 point(const char* key) const {
    const auto& v = raw(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ScenarioError(at(key), "expected [x, y]");
    return {v[0].get<double>(), v[1].get<double>()};
  }
  Pose2D pose(const char* key) const {
    const auto& v = raw(key);
    if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
      throw ScenarioError(at(key), "expected [x, y, theta]");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
};

template <typename F>
void wrap(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    throw ScenarioError(path, e.what());
  }
}

RadioProfile profile_preset(const std::string& name, const std::string& path) {
  if (name == "915MHz") return RadioProfile::band_915mhz();
  if (name == "5GHz") return RadioProfile::band_5ghz();
  throw ScenarioError(path, "unknown radio preset '" + name + "'");
}

RadioProfile read_profile(const Reader& r, const std::string& name) {
  RadioProfile p = r.has("preset") ? profile_preset(r.string("preset"), r.at("preset")) : RadioProfile{};
  p.band_label = r.has("band_label") ? r.string("band_label") : (r.has("preset") ? p.band_label : name);
  r.number("ref_loss_at_1m", p.ref_loss_at_1m);
  r.positive("path_loss_exponent", p.path_loss_exponent);
  r.number("per_wall_loss_multiplier", p.per_wall_loss_multiplier);
  r.number("link_budget", p.link_budget);
  r.positive("capacity", p.capacity);
  r.number("base_latency", p.base_latency);
  if (p.per_wall_loss_multiplier < 0.0) throw ScenarioError(r.at("per_wall_loss_multiplier"), "must be non-negative");
  if (p.base_latency < 0.0) throw ScenarioError(r.at("base_latency"), "must be non-negative");
  return p;
}

void read_icp(const Reader& r, IcpParams& p) {
  r.integer("max_iterations", p.max_iterations);
  r.positive("max_correspondence_dist", p.max_correspondence_dist);
  r.positive("trim_ratio", p.trim_ratio);
  r.positive("convergence_translation", p.convergence_translation);
  r.positive("convergence_rotation", p.convergence_rotation);
  wrap(r.path(), [&] { p.validate(); });
}

void read_config(const Reader& r, SimConfig& c) {
  r.positive("dt", c.dt);
  r.positive("lidar_rate", c.lidar_rate);
  r.positive("watchdog", c.watchdog);
  if (r.has("odometry")) {
    const auto o = r.child("odometry");
    o.number("sigma_translation", c.odometry.sigma_translation);
    o.number("sigma_rotation", c.odometry.sigma_rotation);
  }
  if (r.has("icp")) read_icp(r.child("icp"), c.icp);
  r.positive("scan_voxel", c.scan_voxel);
  r.positive("map_voxel", c.map_voxel);
  r.positive("icp_accept_residual", c.icp_accept_residual);
  r.positive("icp_max_correction", c.icp_max_correction);
  if (r.has("geiger")) {
    const auto g = r.child("geiger");
    g.number("threshold", c.geiger.threshold);
    g.positive("fov", c.geiger.fov);
    g.positive("max_projection_range", c.geiger.max_projection_range);
    if (g.has("bin_edges")) {
      const auto& e = g.raw("bin_edges");
      if (!e.is_array() || e.size() != 3) throw ScenarioError(g.at("bin_edges"), "expected three numbers");
      for (std::size_t i = 0; i < 3; ++i) {
        if (!e[i].is_number()) throw ScenarioError(g.at("bin_edges"), "expected three numbers");
        c.geiger.bin_edges[i] = e[i].get<double>();
      }
    }
    if (g.has("rule")) {
      const auto rule = g.string("rule");
      if (rule == "closer_wins") c.geiger.rule = AnnotationRule::closer_wins;
      else if (rule == "max_level") c.geiger.rule = AnnotationRule::max_level;
      else throw ScenarioError(g.at("rule"), "expected \"closer_wins\" or \"max_level\"");
    }
  }
  if (r.has("gap")) {
    const auto g = r.child("gap");
    g.positive("clearance_range", c.gap.clearance_range);
    g.number("min_gap_width", c.gap.min_gap_width);
    g.number("width_weight", c.gap.width_weight);
    g.number("heading_weight", c.gap.heading_weight);
    g.positive("steer_gain", c.gap.steer_gain);
  }
  if (r.has("relocalize")) {
    const auto g = r.child("relocalize");
    g.integer("grid_steps", c.relocalize.grid_steps);
    g.positive("grid_spacing", c.relocalize.grid_spacing);
    g.integer("heading_count", c.relocalize.heading_count);
    g.positive("accept_residual", c.relocalize.accept_residual);
    g.positive("min_inlier_fraction", c.relocalize.min_inlier_fraction);
    g.positive("inlier_distance", c.relocalize.inlier_distance);
    g.positive("max_offset", c.relocalize.max_offset);
    if (c.relocalize.grid_steps < 0 || c.relocalize.heading_count < 1)
      throw ScenarioError(g.path(), "grid_steps must be >= 0 and heading_count >= 1");
  }
  c.relocalize.icp = c.icp;
  if (r.has("relocalize") && r.child("relocalize").has("icp")) {
    c.relocalize.icp = IcpParams{};
    read_icp(r.child("relocalize").child("icp"), c.relocalize.icp);
  }
  r.positive("path_spacing", c.path_spacing);
  r.positive("coverage_cell", c.coverage_cell);
  r.size("transfer_chunk", c.transfer_chunk);
  r.size("view_stream_bytes", c.view_stream_bytes);
  wrap(r.path(), [&] { c.validate(); });
}

RobotSpec read_robot(const Reader& r) {
  RobotSpec s;
  const Pose2D start = r.pose("start");
  if (r.has("preset")) {
    const auto preset = r.string("preset");
    if (preset == "warthog") s = RobotSpec::warthog(start);
    else if (preset == "hd2") s = RobotSpec::hd2(start);
    else throw ScenarioError(r.at("preset"), "unknown robot preset '" + preset + "'");
  }
  s.start = start;
  s.id = r.string("id");
  r.positive("footprint_radius", s.footprint_radius);
  r.positive("v_max", s.v_max);
  r.positive("omega_max", s.omega_max);
  if (r.has("lidar")) {
    const auto l = r.child("lidar");
    l.integer("beam_count", s.lidar.beam_count);
    l.positive("fov", s.lidar.fov);
    l.positive("max_range", s.lidar.max_range);
    l.number("range_noise_sigma", s.lidar.range_noise_sigma);
  }
  if (r.has("camera")) {
    const auto& raw = r.raw("camera");
    if (raw.is_boolean() && !raw.get<bool>()) {
      s.camera.reset();
    } else {
      const auto c = r.child("camera");
      CameraSpec cs = s.camera.value_or(CameraSpec{});
      c.positive("fov", cs.fov);
      c.positive("max_effective_range", cs.max_effective_range);
      c.number("ambient_level", cs.ambient_level);
      c.number("gain", cs.gain);
      c.positive("min_distance", cs.min_distance);
      s.camera = cs;
    }
  }
  if (r.has("camera_mount")) {
    const auto m = r.child("camera_mount");
    m.number("pan_min", s.mount.pan_min);
    m.number("pan_max", s.mount.pan_max);
    m.number("offset", s.mount.offset);
  }
  wrap(r.path(), [&] { s.validate(); });
  return s;
}

}  // namespace

ScriptStep parse_script_step(const json& j, const std::string& path) {
  const Reader r(j, path);
  ScriptStep s;
  if (r.has("at")) {
    s.at = r.number("at");
    if (*s.at < 0.0) throw ScenarioError(r.at("at"), "must be non-negative");
  }
  if (r.has("await")) {
    s.await = r.string("await");
    static const std::set<std::string> plain{"TransferComplete", "RelocalizeSuccess", "RelocalizeFailure",
                                             "RepeatDone", "Detection", "Collision"};
    const std::string& a = *s.await;
    bool ok = plain.contains(a) || (a.starts_with("Arrived:") && a.size() > 8);
    if (a.starts_with("Phase:"))
      for (auto ph : {MissionPhase::outdoor_mapping, MissionPhase::map_transfer, MissionPhase::await_relocalize,
                      MissionPhase::indoor_inspection, MissionPhase::return_home, MissionPhase::complete})
        ok = ok || a.substr(6) == to_string(ph);
    if (!ok) throw ScenarioError(r.at("await"), "unknown event '" + a + "'");
  }
  if (s.at && s.await) throw ScenarioError(path, "a step has either 'at' or 'await', not both");

  int actions = 0;
  if (r.has("command")) {
    ++actions;
    try {
      s.command = command_from_json(r.raw("command"));
    } catch (const std::exception& e) {
      throw ScenarioError(r.at("command"), e.what());
    }
  }
  if (r.has("drive")) {
    ++actions;
    const auto d = r.child("drive");
    DriveDirective dd;
    dd.robot = d.string("robot");
    const auto& wps = d.raw("waypoints");
    if (!wps.is_array() || wps.empty()) throw ScenarioError(d.at("waypoints"), "expected a non-empty array");
    for (std::size_t i = 0; i < wps.size(); ++i) {
      if (!wps[i].is_array() || wps[i].size() != 2 || !wps[i][0].is_number() || !wps[i][1].is_number())
        throw ScenarioError(d.at("waypoints") + "/" + std::to_string(i), "expected [x, y]");
      dd.waypoints.push_back({wps[i][0].get<double>(), wps[i][1].get<double>()});
    }
    d.positive("speed", dd.speed);
    d.boolean("gap_assist", dd.gap_assist);
    d.integer("laps", dd.laps);
    if (dd.laps < 1) throw ScenarioError(d.at("laps"), "must be >= 1");
    if (d.has("stop_after_distance")) dd.stop_after_distance = d.number("stop_after_distance");
    d.positive("tolerance", dd.tolerance);
    s.drive = dd;
  }
  if (r.has("guess")) {
    ++actions;
    const auto g = r.child("guess");
    s.guess = GuessDirective{g.string("robot"), g.has("offset") ? g.pose("offset") : Pose2D{}};
  }
  if (r.has("link")) {
    ++actions;
    const auto l = r.child("link");
    LinkDirective ld{l.string("a"), l.string("b"), true};
    l.boolean("down", ld.down);
    s.link = ld;
  }
  if (actions > 1) throw ScenarioError(path, "a step carries at most one action");
  return s;
}

Scenario load_scenario(const json& doc) {
  const Reader top(doc, "");
  Scenario sc;
  sc.name = top.has("name") ? top.string("name") : "scenario";
  sc.world = load_world(top.raw("world"), "/world");

  if (top.has("seed")) {
    const auto& v = top.raw("seed");
    if (!v.is_number_unsigned()) throw ScenarioError("/seed", "expected a non-negative integer");
    sc.config.seed = v.get<std::uint64_t>();
  }
  if (top.has("sim")) read_config(top.child("sim"), sc.config);
  else sc.config.relocalize.icp = sc.config.icp;
  top.positive("time_cap", sc.time_cap);

  const auto& robots = top.raw("robots");
  if (!robots.is_array() || robots.empty()) throw ScenarioError("/robots", "expected a non-empty array");
  for (std::size_t i = 0; i < robots.size(); ++i) {
    const std::string p = "/robots/" + std::to_string(i);
    sc.robots.push_back(read_robot(Reader(robots[i], p)));
    for (std::size_t k = 0; k < i; ++k)
      if (sc.robots[k].id == sc.robots[i].id) throw ScenarioError(p + "/id", "duplicate robot id");
    if (!sc.world.bounds.contains(sc.robots[i].start.translation()))
      throw ScenarioError(p + "/start", "start lies outside world bounds");
    if (sc.world.clearance(sc.robots[i].start.translation()) < sc.robots[i].footprint_radius)
      throw ScenarioError(p + "/start", "start pose collides with a wall");
  }

  const auto radio = top.child("radio");
  sc.base_position = radio.child("base_station").point("position");
  if (!sc.world.bounds.contains(sc.base_position))
    throw ScenarioError("/radio/base_station/position", "base station lies outside world bounds");
  std::map<std::string, RadioProfile> profiles{{"915MHz", RadioProfile::band_915mhz()},
                                               {"5GHz", RadioProfile::band_5ghz()}};
  if (radio.has("profiles")) {
    const auto& ps = radio.raw("profiles");
    if (!ps.is_object()) throw ScenarioError("/radio/profiles", "expected an object");
    for (const auto& [name, body] : ps.items())
      profiles[name] = read_profile(Reader(body, "/radio/profiles/" + name), name);
  }
  auto lookup = [&](const std::string& name, const std::string& path) {
    auto it = profiles.find(name);
    if (it == profiles.end()) throw ScenarioError(path, "unknown radio profile '" + name + "'");
    return it->second;
  };
  sc.base_radio = profiles.at("915MHz");
  if (radio.has("assignments")) {
    const auto& as = radio.raw("assignments");
    if (!as.is_object()) throw ScenarioError("/radio/assignments", "expected an object");
    for (const auto& [node, prof] : as.items()) {
      const std::string p = "/radio/assignments/" + node;
      if (!prof.is_string()) throw ScenarioError(p, "expected a profile name");
      const auto profile = lookup(prof.get<std::string>(), p);
      if (node == "base") {
        sc.base_radio = profile;
        continue;
      }
      bool found = false;
      for (auto& rs : sc.robots)
        if (rs.id == node) {
          rs.radio = profile;
          found = true;
        }
      if (!found) throw ScenarioError(p, "assignment names an unknown node");
    }
  }

  if (top.has("operator_script")) {
    const auto& steps = top.raw("operator_script");
    if (!steps.is_array()) throw ScenarioError("/operator_script", "expected an array");
    double last_at = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const std::string p = "/operator_script/" + std::to_string(i);
      auto s = parse_script_step(steps[i], p);
      if (s.at) {
        if (*s.at < last_at) throw ScenarioError(p + "/at", "time triggers must be non-decreasing");
        last_at = *s.at;
      }
      auto known = [&](const std::string& id, const std::string& where) {
        for (const auto& rs : sc.robots)
          if (rs.id == id) return;
        if (id != "base") throw ScenarioError(where, "unknown robot '" + id + "'");
      };
      if (s.drive) known(s.drive->robot, p + "/drive/robot");
      if (s.await && s.await->starts_with("Arrived:")) known(s.await->substr(8), p + "/await");
      if (s.guess) known(s.guess->robot, p + "/guess/robot");
      if (s.link) {
        known(s.link->a, p + "/link/a");
        known(s.link->b, p + "/link/b");
      }
      sc.script.push_back(std::move(s));
    }
  }
  return sc;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("", "cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ScenarioError("", std::string("invalid JSON: ") + e.what());
  }
  return load_scenario(doc);
}

Simulation make_simulation(const Scenario& s) {
  return Simulation(s.world, s.robots, s.base_position, s.base_radio, s.config);
}

}  // namespace fleetsim
