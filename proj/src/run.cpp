#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fleetsim/station.hpp"

namespace fleetsim {

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

// ---------------------------------------------------------------------------

ScriptRunner::ScriptRunner(std::vector<ScriptStep> steps) : steps_(std::move(steps)) {}

std::optional<std::string> ScriptRunner::waiting_for() const {
  if (next_ < steps_.size() && steps_[next_].await) return steps_[next_].await;
  return std::nullopt;
}

bool ScriptRunner::step_due(const ScriptStep& s, const Simulation& sim) const {
  if (s.await) return std::find(seen_.begin(), seen_.end(), *s.await) != seen_.end();
  return sim.time() >= s.at.value_or(0.0) - 1e-9;
}

void ScriptRunner::execute(const ScriptStep& s, Simulation& sim) {
  if (s.command) sim.submit(*s.command);
  if (s.drive) {
    Policy p;
    p.d = *s.drive;
    p.start_distance = sim.robot(s.drive->robot).distance_travelled;
    policies_[s.drive->robot] = p;
  }
  if (s.guess) {
    const auto& r = sim.robot(s.guess->robot);
    const Transform2D truth = sim.robots().front()->spec.start.inverse() * r.pose;
    OperatorCommand c;
    c.kind = OperatorCommand::Kind::reloc_guess;
    c.robot_id = s.guess->robot;
    c.guess = Pose2D(truth.x + s.guess->offset.x, truth.y + s.guess->offset.y, truth.theta + s.guess->offset.theta);
    sim.submit(c);
  }
  if (s.link) sim.force_link_down(s.link->a, s.link->b, s.link->down);
}

void ScriptRunner::drive(Simulation& sim) {
  const auto every = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::lround(0.1 / sim.config().dt)));
  if (sim.steps() % every != 0) return;
  for (auto it = policies_.begin(); it != policies_.end();) {
    auto& p = it->second;
    const auto& r = sim.robot(it->first);
    const Vec2 here = r.pose.translation();
    bool done = p.d.stop_after_distance && r.distance_travelled - p.start_distance >= *p.d.stop_after_distance;
    while (!done && distance(here, p.d.waypoints[p.index]) < p.d.tolerance) {
      if (++p.index == p.d.waypoints.size()) {
        p.index = 0;
        if (++p.lap >= p.d.laps) done = true;
      }
    }
    OperatorCommand c;
    c.kind = OperatorCommand::Kind::velocity;
    c.robot_id = it->first;
    if (done) {
      sim.submit(c);
      seen_.push_back("Arrived:" + it->first);
      it = policies_.erase(it);
      continue;
    }
    const Vec2 target = p.d.waypoints[p.index];
    const Vec2 to = target - here;
    const double err = angle_difference(std::atan2(to.y, to.x), r.pose.theta);
    const double v_cap = p.d.speed * r.spec.v_max;
    if (p.d.gap_assist) {
      c.v = v_cap;
      c.goal_heading = err;
    } else {
      const bool last = p.lap + 1 == p.d.laps && p.index + 1 == p.d.waypoints.size();
      c.omega = std::clamp(2.0 * err, -r.spec.omega_max, r.spec.omega_max);
      c.v = std::fabs(err) > 0.6 ? 0.0 : v_cap * std::cos(err);
      if (last) c.v = std::min(c.v, 1.5 * norm(to));
    }
    sim.submit(c);
    ++it;
  }
}

void ScriptRunner::before_step(Simulation& sim) {
  while (next_ < steps_.size() && step_due(steps_[next_], sim)) {
    seen_.clear();
    execute(steps_[next_], sim);
    ++next_;
  }
  drive(sim);
}

void ScriptRunner::observe(const std::vector<SimEvent>& events) {
  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::transfer_complete: seen_.push_back("TransferComplete"); break;
      case EventKind::relocalize_success: seen_.push_back("RelocalizeSuccess"); break;
      case EventKind::relocalize_failure: seen_.push_back("RelocalizeFailure"); break;
      case EventKind::repeat_done: seen_.push_back("RepeatDone"); break;
      case EventKind::phase_change: seen_.push_back("Phase:" + e.detail); break;
      case EventKind::detection: seen_.push_back("Detection"); break;
      case EventKind::collision: seen_.push_back("Collision"); break;
      default: break;
    }
  }
}

// ---------------------------------------------------------------------------

RunResult summarize_run(Simulation& sim, RunResult res) {
  sim.log().record(sim.time(), "metric",
                   {{"end_of_run", true}, {"steps", sim.steps()}, {"phase", to_string(sim.mission().phase)}});
  res.phase = sim.mission().phase;
  res.sim_time = sim.time();
  res.log_lines = sim.log().lines();
  res.log_digest = sha256_hex(sim.log().text());
  res.map_bytes = serialize_map(sim.global_map());
  res.map_digest = sha256_hex(res.map_bytes);
  res.metrics = compute_metrics(res.log_lines);
  return res;
}

namespace {

Scenario with_options(const Scenario& s, const RunOptions& o) {
  Scenario out = s;
  if (o.seed) out.config.seed = *o.seed;
  if (o.time_cap) out.time_cap = *o.time_cap;
  return out;
}

}  // namespace

RunResult run_scenario(const Scenario& scenario_in, const RunOptions& options, const StepHook& hook) {
  const Scenario scenario = with_options(scenario_in, options);
  Simulation sim = make_simulation(scenario);
  ScriptRunner runner(scenario.script);
  RunResult res;

  bool stopped = false;
  while (!runner.finished() && !sim.mission().failed) {
    if (sim.time() >= scenario.time_cap - 1e-9) break;
    runner.before_step(sim);
    if (runner.finished()) break;
    const auto events = sim.step();
    runner.observe(events);
    if (hook && !hook(sim, events)) {
      stopped = true;
      break;
    }
  }

  if (sim.mission().failed) {
    res.status = RunStatus::mission_failure;
    res.message = sim.mission().failure_reason;
  } else if (!runner.finished() && !stopped) {
    if (const auto w = runner.waiting_for()) {
      res.status = RunStatus::script_deadlock;
      res.message = "script deadlock: awaited event '" + *w + "' did not occur before the time cap";
    } else {
      res.status = RunStatus::mission_failure;
      res.message = "time cap reached before the script finished";
    }
  } else {
    res.message = stopped ? "stopped" : "script finished";
  }
  res = summarize_run(sim, std::move(res));
  if (options.out_dir) write_artifacts(*options.out_dir, sim, res, options.raster);
  return res;
}

RunResult replay_log(const Scenario& scenario_in, const std::vector<std::string>& log_lines,
                     const RunOptions& options) {
  const Scenario scenario = with_options(scenario_in, options);
  Simulation sim = make_simulation(scenario);
  const double dt = scenario.config.dt;

  struct Action {
    std::uint64_t step;
    std::optional<OperatorCommand> cmd;
    std::optional<LinkDirective> link;
  };
  std::vector<Action> actions;
  std::uint64_t last_step = 0;
  for (const auto& line : log_lines) {
    const auto j = nlohmann::json::parse(line);
    const double t = j.at("sim_time").get<double>();
    last_step = std::max(last_step, static_cast<std::uint64_t>(std::llround(t / dt)));
    const auto step = static_cast<std::uint64_t>(std::llround(t / dt));
    const auto kind = j.at("kind").get<std::string>();
    const auto& p = j.at("payload");
    if (kind == "command") {
      const auto status = p.value("status", "");
      if (status == "submitted" || (status == "rejected" && p.value("stage", "") == "submit"))
        actions.push_back({step, command_from_json(p.at("command")), std::nullopt});
    } else if (kind == "metric" && p.contains("end_of_run")) {
      last_step = p.at("steps").get<std::uint64_t>();
      break;
    } else if (kind == "link_change" && p.contains("forced")) {
      actions.push_back(
          {step, std::nullopt, LinkDirective{p.at("a").get<std::string>(), p.at("b").get<std::string>(),
                                             p.at("forced").get<bool>()}});
    }
  }

  std::size_t next = 0;
  while (sim.steps() < last_step) {
    while (next < actions.size() && actions[next].step <= sim.steps()) {
      const auto& a = actions[next++];
      if (a.cmd) sim.submit(*a.cmd);
      if (a.link) sim.force_link_down(a.link->a, a.link->b, a.link->down);
    }
    sim.step();
  }
  RunResult res;
  res.message = "replayed " + std::to_string(actions.size()) + " actions";
  if (sim.mission().failed) {
    res.status = RunStatus::mission_failure;
    res.message = sim.mission().failure_reason;
  }
  res = summarize_run(sim, std::move(res));
  if (options.out_dir) write_artifacts(*options.out_dir, sim, res, options.raster);
  return res;
}

void write_artifacts(const std::filesystem::path& dir, const Simulation& sim, const RunResult& result, bool raster) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "mission.log", std::ios::binary);
    out << sim.log().text();
  }
  {
    std::ofstream out(dir / "map.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(result.map_bytes.data()),
              static_cast<std::streamsize>(result.map_bytes.size()));
  }
  {
    std::ofstream out(dir / "map.txt", std::ios::binary);
    out << export_map_text(sim.global_map());
  }
  {
    nlohmann::ordered_json j = result.metrics.to_json();
    j["phase"] = to_string(result.phase);
    j["status"] = static_cast<int>(result.status);
    j["message"] = result.message;
    j["sim_time"] = result.sim_time;
    j["map_points"] = sim.global_map().size();
    j["map_origin_frame"] = sim.global_map().origin_frame();
    j["log_sha256"] = result.log_digest;
    j["map_sha256"] = result.map_digest;
    std::ofstream out(dir / "metrics.json", std::ios::binary);
    out << j.dump(2) << '\n';
  }
  if (raster) {
    const auto contents = parse_map_file(result.map_bytes);
    const auto rendered = render_map(contents, trajectories_from_log(result.log_lines, contents.origin_frame));
    write_ppm(dir / "map.ppm", rendered.image);
  }
}

}  // namespace fleetsim
