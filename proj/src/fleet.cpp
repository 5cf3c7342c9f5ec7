#include "fleetsim/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fleetsim {

using ojson = nlohmann::ordered_json;

std::string_view to_string(RobotMode m) {
  switch (m) {
    case RobotMode::idle: return "idle";
    case RobotMode::manual: return "manual";
    case RobotMode::gap_assist: return "gap_assist";
    case RobotMode::repeat: return "repeat";
  }
  return "idle";
}

RobotMode robot_mode_from_string(std::string_view s) {
  if (s == "idle") return RobotMode::idle;
  if (s == "manual") return RobotMode::manual;
  if (s == "gap_assist") return RobotMode::gap_assist;
  if (s == "repeat") return RobotMode::repeat;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

std::string_view to_string(MissionPhase p) {
  switch (p) {
    case MissionPhase::outdoor_mapping: return "OutdoorMapping";
    case MissionPhase::map_transfer: return "MapTransfer";
    case MissionPhase::await_relocalize: return "AwaitRelocalize";
    case MissionPhase::indoor_inspection: return "IndoorInspection";
    case MissionPhase::return_home: return "ReturnHome";
    case MissionPhase::complete: return "Complete";
  }
  return "OutdoorMapping";
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::command_applied: return "CommandApplied";
    case EventKind::command_rejected: return "CommandRejected";
    case EventKind::transfer_complete: return "TransferComplete";
    case EventKind::relocalize_success: return "RelocalizeSuccess";
    case EventKind::relocalize_failure: return "RelocalizeFailure";
    case EventKind::repeat_done: return "RepeatDone";
    case EventKind::phase_change: return "PhaseChange";
    case EventKind::collision: return "Collision";
    case EventKind::detection: return "Detection";
    case EventKind::link_change: return "LinkChange";
  }
  return "";
}

void RobotSpec::validate() const {
  if (id.empty() || id == "base") throw std::invalid_argument("robot id must be non-empty and not 'base'");
  if (!(footprint_radius > 0.0)) throw std::invalid_argument("footprint radius must be positive");
  if (!(v_max > 0.0 && omega_max > 0.0)) throw std::invalid_argument("robot speeds must be positive");
  if (!(mount.pan_min <= mount.pan_max)) throw std::invalid_argument("camera pan range is empty");
  if (!(mount.offset >= 0.0)) throw std::invalid_argument("camera offset must be non-negative");
  lidar.validate();
  if (camera) camera->validate();
  if (!(radio.capacity > 0.0 && radio.path_loss_exponent > 0.0))
    throw std::invalid_argument("radio capacity and exponent must be positive");
}

RobotSpec RobotSpec::warthog(Pose2D start) {
  RobotSpec s;
  s.id = "warthog";
  s.footprint_radius = 0.8;
  s.v_max = 2.0;
  s.omega_max = 1.0;
  s.lidar.max_range = 30.0;
  s.start = start;
  return s;
}

RobotSpec RobotSpec::hd2(Pose2D start) {
  RobotSpec s;
  s.id = "hd2";
  s.footprint_radius = 0.35;
  s.v_max = 0.8;
  s.omega_max = 1.2;
  s.lidar.max_range = 20.0;
  s.camera = CameraSpec{};
  s.mount = {-std::numbers::pi / 2.0, std::numbers::pi / 2.0, 0.2};
  s.start = start;
  return s;
}

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(lidar_rate > 0.0 && lidar_rate * dt <= 1.0)) throw std::invalid_argument("lidar rate must be in (0, 1/dt]");
  if (!(watchdog > 0.0)) throw std::invalid_argument("watchdog must be positive");
  if (!(scan_voxel > 0.0 && map_voxel > 0.0 && coverage_cell > 0.0 && path_spacing > 0.0))
    throw std::invalid_argument("voxel, cell and spacing sizes must be positive");
  if (odometry.sigma_translation < 0.0 || odometry.sigma_rotation < 0.0)
    throw std::invalid_argument("odometry noise must be non-negative");
  if (transfer_chunk == 0) throw std::invalid_argument("transfer chunk must be positive");
  icp.validate();
  geiger.validate();
  gap.validate();
}

// ---------------------------------------------------------------------------
// Wire form of operator commands

std::string_view wire_type(OperatorCommand::Kind k) {
  using K = OperatorCommand::Kind;
  switch (k) {
    case K::velocity: return "cmd_vel";
    case K::set_mode: return "set_mode";
    case K::camera_pan: return "set_camera_pan";
    case K::reloc_guess: return "reloc_guess";
    case K::start_transfer: return "start_transfer";
    case K::advance_phase: return "advance_phase";
    case K::abort: return "abort";
  }
  return "";
}

ojson command_to_json(const OperatorCommand& c) {
  using K = OperatorCommand::Kind;
  ojson j;
  j["type"] = wire_type(c.kind);
  if (!c.robot_id.empty()) j["robot_id"] = c.robot_id;
  ojson p = ojson::object();
  switch (c.kind) {
    case K::velocity:
      p["v"] = c.v;
      p["omega"] = c.omega;
      if (c.goal_heading) p["goal_heading"] = *c.goal_heading;
      break;
    case K::set_mode: p["mode"] = to_string(c.mode); break;
    case K::camera_pan: p["pan"] = c.pan; break;
    case K::reloc_guess:
      p["x"] = c.guess.x;
      p["y"] = c.guess.y;
      p["theta"] = c.guess.theta;
      break;
    case K::start_transfer:
      p["from"] = c.from;
      p["to"] = c.to;
      break;
    case K::advance_phase:
    case K::abort: break;
  }
  j["payload"] = std::move(p);
  return j;
}

namespace {

double number_field(const nlohmann::json& p, const char* key, std::optional<double> fallback = std::nullopt) {
  if (!p.contains(key)) {
    if (fallback) return *fallback;
    throw std::invalid_argument(std::string("payload.") + key + " is required");
  }
  const auto& v = p.at(key);
  if (!v.is_number()) throw std::invalid_argument(std::string("payload.") + key + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw std::invalid_argument(std::string("payload.") + key + " must be finite");
  return d;
}

std::string string_field(const nlohmann::json& p, const char* key) {
  if (!p.contains(key) || !p.at(key).is_string())
    throw std::invalid_argument(std::string("payload.") + key + " must be a string");
  return p.at(key).get<std::string>();
}

}  // namespace

OperatorCommand command_from_json(const nlohmann::json& j) {
  using K = OperatorCommand::Kind;
  if (!j.is_object()) throw std::invalid_argument("command must be an object");
  if (!j.contains("type") || !j.at("type").is_string()) throw std::invalid_argument("type must be a string");
  const auto type = j.at("type").get<std::string>();
  OperatorCommand c;
  if (j.contains("robot_id")) {
    if (!j.at("robot_id").is_string()) throw std::invalid_argument("robot_id must be a string");
    c.robot_id = j.at("robot_id").get<std::string>();
  }
  const nlohmann::json empty = nlohmann::json::object();
  const auto& p = j.contains("payload") ? j.at("payload") : empty;
  if (!p.is_object()) throw std::invalid_argument("payload must be an object");

  auto need_robot = [&] {
    if (c.robot_id.empty()) throw std::invalid_argument(type + " requires robot_id");
  };
  if (type == "cmd_vel") {
    need_robot();
    c.kind = K::velocity;
    c.v = number_field(p, "v");
    c.omega = number_field(p, "omega", 0.0);
    if (p.contains("goal_heading")) c.goal_heading = number_field(p, "goal_heading");
  } else if (type == "set_mode") {
    need_robot();
    c.kind = K::set_mode;
    c.mode = robot_mode_from_string(string_field(p, "mode"));
  } else if (type == "set_camera_pan") {
    need_robot();
    c.kind = K::camera_pan;
    c.pan = number_field(p, "pan");
  } else if (type == "reloc_guess") {
    need_robot();
    c.kind = K::reloc_guess;
    c.guess = Pose2D(number_field(p, "x"), number_field(p, "y"), number_field(p, "theta"));
  } else if (type == "start_transfer") {
    c.kind = K::start_transfer;
    c.from = string_field(p, "from");
    c.to = string_field(p, "to");
  } else if (type == "advance_phase") {
    c.kind = K::advance_phase;
  } else if (type == "abort") {
    c.kind = K::abort;
  } else {
    throw std::invalid_argument("unknown command type '" + type + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------

void MissionLog::record(double sim_time, std::string_view kind, ojson payload) {
  ojson j;
  j["sim_time"] = sim_time;
  j["kind"] = kind;
  j["payload"] = std::move(payload);
  lines_.push_back(j.dump());
  if (out_) *out_ << lines_.back() << '\n';
}

std::string MissionLog::text() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

std::vector<std::string> MissionLog::since(std::size_t& cursor) const {
  std::vector<std::string> out(lines_.begin() + static_cast<std::ptrdiff_t>(std::min(cursor, lines_.size())),
                               lines_.end());
  cursor = lines_.size();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

bool is_robot_command(OperatorCommand::Kind k) {
  using K = OperatorCommand::Kind;
  return k == K::velocity || k == K::set_mode || k == K::camera_pan || k == K::reloc_guess;
}

ojson pose_json(const Transform2D& t) { return ojson::array({t.x, t.y, t.theta}); }

}  // namespace

Simulation::Simulation(WorldModel world, std::vector<RobotSpec> robots, Vec2 base_position, RadioProfile base_radio,
                       SimConfig config)
    : world_(std::make_shared<const WorldModel>(std::move(world))), config_(std::move(config)) {
  config_.validate();
  if (robots.empty()) throw std::invalid_argument("simulation needs at least one robot");
  lidar_every_ = std::max(1, static_cast<int>(std::lround(1.0 / (config_.lidar_rate * config_.dt))));

  std::vector<RadioNode> nodes;
  nodes.push_back({kBaseNode, "base", base_position, std::move(base_radio)});
  for (std::size_t i = 0; i < robots.size(); ++i) {
    auto& spec = robots[i];
    spec.validate();
    for (std::size_t j = 0; j < i; ++j)
      if (robots[j].id == spec.id) throw std::invalid_argument("duplicate robot id '" + spec.id + "'");
    if (world_->clearance(spec.start.translation()) < spec.footprint_radius)
      throw std::invalid_argument("robot '" + spec.id + "' starts in collision");

    auto r = std::make_unique<RobotState>();
    r->spec = spec;
    r->node = static_cast<NodeId>(i + 1);
    r->pose = spec.start;
    r->estimate_frame = spec.id;
    r->local_map = AnnotatedMap(spec.id, config_.map_voxel, config_.icp.max_correspondence_dist);
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(i)};
    r->rng.seed(seq);
    r->recorder = std::make_unique<PathRecorder>(config_.path_spacing);
    nodes.push_back({r->node, spec.id, spec.start.translation(), spec.radio});
    robots_.push_back(std::move(r));
  }
  net_ = std::make_unique<Network>(*world_, std::move(nodes));
  mission_.active_robot = robots_.front()->spec.id;

  log_.record(0.0, "phase_change", {{"phase", to_string(mission_.phase)}, {"previous", nullptr}, {"cause", "start"}});
  for (const auto& r : robots_) log_pose(*r);
}

const RobotState* Simulation::find_robot(const std::string& id) const {
  for (const auto& r : robots_)
    if (r->spec.id == id) return r.get();
  return nullptr;
}

const RobotState& Simulation::robot(const std::string& id) const {
  const auto* r = find_robot(id);
  if (!r) throw std::out_of_range("unknown robot '" + id + "'");
  return *r;
}

RobotState& Simulation::robot_mut(const std::string& id) { return const_cast<RobotState&>(robot(id)); }

NodeId Simulation::node_of(const std::string& name) const {
  if (name == "base") return kBaseNode;
  return robot(name).node;
}

const AnnotatedMap& Simulation::global_map() const {
  return robots_[global_owner_.value_or(0)]->local_map;
}

void Simulation::force_link_down(const std::string& a, const std::string& b, bool down) {
  net_->force_link_down(node_of(a), node_of(b), down);
  log_.record(time(), "link_change", {{"a", a}, {"b", b}, {"forced", down}});
}

void Simulation::emit(SimEvent e) {
  e.sim_time = time();
  events_.push_back(std::move(e));
}

void Simulation::log_pose(const RobotState& r) {
  log_.record(time(), "pose",
              {{"robot", r.spec.id},
               {"x", r.pose.x},
               {"y", r.pose.y},
               {"theta", r.pose.theta},
               {"estimate", pose_json(r.estimated_pose)},
               {"frame", r.estimate_frame},
               {"mode", to_string(r.mode)}});
}

std::optional<std::string> Simulation::submit(const OperatorCommand& cmd) {
  const auto body = command_to_json(cmd);
  auto reject = [&](std::string reason) {
    log_.record(time(), "command",
                {{"status", "rejected"}, {"stage", "submit"}, {"reason", reason}, {"command", body}});
    emit({EventKind::command_rejected, 0.0, cmd.robot_id, reason, body});
    return std::optional<std::string>(std::move(reason));
  };

  if (is_robot_command(cmd.kind)) {
    const auto* r = find_robot(cmd.robot_id);
    if (!r) return reject("unknown robot");
    Message m;
    m.cls = MessageClass::control;
    m.source = kBaseNode;
    m.destination = r->node;
    m.payload = body.dump();
    m.payload_size = m.payload.size();
    if (m.payload_size > kMaxControlBytes) return reject("command too large");
    if (net_->send(std::move(m)) == SendStatus::rejected_unreachable) return reject("unreachable");
  } else {
    if (!cmd.robot_id.empty() && !find_robot(cmd.robot_id)) return reject("unknown robot");
    base_queue_.push_back(cmd);
  }
  log_.record(time(), "command", {{"status", "submitted"}, {"command", body}});
  return std::nullopt;
}

void Simulation::set_phase(MissionPhase p, std::string_view cause) {
  const auto prev = mission_.phase;
  mission_.phase = p;
  log_.record(time(), "phase_change", {{"phase", to_string(p)}, {"previous", to_string(prev)}, {"cause", cause}});
  emit({EventKind::phase_change, 0.0, mission_.active_robot, std::string(to_string(p)),
        {{"phase", to_string(p)}, {"previous", to_string(prev)}}});
}

void Simulation::apply_base_command(const OperatorCommand& c) {
  using K = OperatorCommand::Kind;
  const auto body = command_to_json(c);
  auto reject = [&](const std::string& reason) {
    log_.record(time(), "command", {{"status", "rejected"}, {"reason", reason}, {"command", body}});
    emit({EventKind::command_rejected, 0.0, c.robot_id, reason, body});
  };
  auto ack = [&] {
    log_.record(time(), "command", {{"status", "applied"}, {"command", body}});
    emit({EventKind::command_applied, 0.0, c.robot_id, std::string(wire_type(c.kind)), body});
  };

  if (c.kind == K::advance_phase) {
    if (mission_.phase == MissionPhase::outdoor_mapping) {
      ack();
      set_phase(MissionPhase::map_transfer, "advance_phase");
    } else if (mission_.phase == MissionPhase::indoor_inspection) {
      ack();
      set_phase(MissionPhase::return_home, "advance_phase");
    } else {
      reject("wrong phase: " + std::string(to_string(mission_.phase)));
    }
    return;
  }

  if (c.kind == K::start_transfer) {
    if (mission_.phase != MissionPhase::map_transfer)
      return reject("wrong phase: " + std::string(to_string(mission_.phase)));
    const auto* from = find_robot(c.from);
    const auto* to = find_robot(c.to);
    if (!from || !to || from == to) return reject("unknown robot");
    if (mission_.transfer && net_->session(*mission_.transfer).state != SessionState::aborted)
      return reject("transfer already started");
    if (from->local_map.empty()) return reject("source map is empty");
    const int id = net_->start_map_transfer(from->node, to->node, serialize_map(from->local_map),
                                            config_.transfer_chunk);
    mission_.transfer = id;
    mission_.transfer_from = c.from;
    mission_.transfer_to = c.to;
    ack();
    const auto& s = net_->session(id);
    logged_session_state_[id] = s.state;
    log_.record(time(), "transfer_progress",
                {{"session", id},
                 {"from", c.from},
                 {"to", c.to},
                 {"state", to_string(s.state)},
                 {"chunks_acked", s.chunks_acked},
                 {"chunks_total", s.chunks_total},
                 {"bytes", s.snapshot->size()}});
    return;
  }

  // abort: cancels an unfinished transfer and stops every addressed robot.
  ack();
  if (mission_.transfer) {
    const auto& s = net_->session(*mission_.transfer);
    if (s.state == SessionState::active || s.state == SessionState::stalled) {
      net_->abort_transfer(s.id);
      logged_session_state_[s.id] = SessionState::aborted;
      log_.record(time(), "transfer_progress",
                  {{"session", s.id},
                   {"state", to_string(SessionState::aborted)},
                   {"chunks_acked", s.chunks_acked},
                   {"chunks_total", s.chunks_total}});
    }
  }
  for (auto& r : robots_) {
    if (!c.robot_id.empty() && r->spec.id != c.robot_id) continue;
    r->command = {};
    r->goal_heading.reset();
    r->repeat.reset();
    if (r->mode == RobotMode::repeat || r->mode == RobotMode::gap_assist) r->mode = RobotMode::manual;
  }
}

std::optional<std::string> Simulation::check_robot_command(const RobotState& r, const OperatorCommand& c) const {
  using K = OperatorCommand::Kind;
  switch (c.kind) {
    case K::set_mode:
      if (c.mode == RobotMode::repeat && r.recorder->record().waypoints.empty()) return "no recorded path";
      return std::nullopt;
    case K::camera_pan:
      if (!r.spec.camera) return "robot has no camera";
      return std::nullopt;
    case K::reloc_guess:
      if (mission_.phase != MissionPhase::await_relocalize)
        return "wrong phase: " + std::string(to_string(mission_.phase));
      if (!r.received_map) return "robot holds no received map";
      if (r.last_cloud.size() < 3) return "no scan to relocalize";
      return std::nullopt;
    default: return std::nullopt;
  }
}

void Simulation::apply_robot_command(RobotState& r, const OperatorCommand& c) {
  using K = OperatorCommand::Kind;
  const auto body = command_to_json(c);
  if (const auto reason = check_robot_command(r, c)) {
    log_.record(time(), "command", {{"status", "rejected"}, {"reason", *reason}, {"command", body}});
    emit({EventKind::command_rejected, 0.0, r.spec.id, *reason, body});
    return;
  }
  switch (c.kind) {
    case K::velocity:
      r.command = {std::clamp(c.v, -r.spec.v_max, r.spec.v_max),
                   std::clamp(c.omega, -r.spec.omega_max, r.spec.omega_max)};
      r.goal_heading = c.goal_heading;
      r.command_time = time();
      break;
    case K::set_mode:
      r.mode = c.mode;
      r.repeat.reset();
      if (c.mode == RobotMode::repeat) {
        GapParams gp = config_.gap;
        gp.v_max = r.spec.v_max;
        gp.omega_max = r.spec.omega_max;
        r.repeat = std::make_unique<RepeatController>(r.recorder->record(), gp);
      }
      break;
    case K::camera_pan: r.camera_pan = std::clamp(c.pan, r.spec.mount.pan_min, r.spec.mount.pan_max); break;
    case K::reloc_guess: break;
    default: return;
  }
  // Velocity commands are frequent; only mode-level changes are acknowledged in the log.
  if (c.kind != K::velocity) {
    log_.record(time(), "command", {{"status", "applied"}, {"command", body}});
    emit({EventKind::command_applied, 0.0, r.spec.id, std::string(wire_type(c.kind)), body});
  }
  if (c.kind == K::reloc_guess) relocalize_robot(r, c.guess);
}

void Simulation::apply_delivered(const Message& m) {
  for (auto& r : robots_) {
    if (r->node != m.destination) continue;
    OperatorCommand c;
    try {
      c = command_from_json(nlohmann::json::parse(m.payload));
    } catch (const std::exception& e) {
      log_.record(time(), "command", {{"status", "rejected"}, {"reason", e.what()}});
      return;
    }
    apply_robot_command(*r, c);
    return;
  }
}

void Simulation::relocalize_robot(RobotState& r, const Pose2D& guess) {
  const auto res = relocalize(*r.received_map, r.last_cloud, guess, config_.relocalize);
  ojson data{{"robot", r.spec.id},
             {"success", res.success},
             {"residual", std::isfinite(res.residual) ? ojson(res.residual) : ojson(nullptr)},
             {"inlier_fraction", res.inlier_fraction},
             {"pose", pose_json(res.pose)},
             {"guess", pose_json(guess)}};
  log_.record(time(), "command", {{"status", "relocalize"}, {"result", data}});
  if (!res.success) {
    emit({EventKind::relocalize_failure, 0.0, r.spec.id, "relocalization rejected", data});
    return;
  }

  // Chain the robot's own frame onto the received map: T_G_H = T_G_scan * T_H_scan^-1.
  const Transform2D local_to_global = res.pose * r.last_scan_estimate.inverse();
  AnnotatedMap global = *r.received_map;
  merge_maps(global, r.local_map, local_to_global, config_.geiger.rule);
  r.local_map = std::move(global);
  r.estimated_pose = local_to_global * r.estimated_pose;
  r.last_scan_estimate = res.pose;
  r.estimate_frame = r.local_map.origin_frame();
  r.recorder->reset();
  r.recorder->add(r.estimated_pose);
  for (std::size_t i = 0; i < robots_.size(); ++i)
    if (robots_[i].get() == &r) global_owner_ = i;
  mission_.active_robot = r.spec.id;
  emit({EventKind::relocalize_success, 0.0, r.spec.id, "relocalized", data});
  set_phase(MissionPhase::indoor_inspection, "RelocalizeSuccess");
}

void Simulation::move_robot(RobotState& r) {
  const double t = time();
  const bool fresh = t < r.command_time + config_.watchdog;
  VelocityCommand cmd;
  switch (r.mode) {
    case RobotMode::idle: break;
    case RobotMode::manual:
      if (fresh) cmd = r.command;
      break;
    case RobotMode::gap_assist:
      if (fresh && r.last_scan) {
        GapParams gp = config_.gap;
        gp.v_max = r.spec.v_max;
        gp.omega_max = r.spec.omega_max;
        const auto front = crop_scan(*r.last_scan, std::numbers::pi / 2.0);
        const auto ftg = follow_the_gap(front, r.goal_heading.value_or(0.0), gp);
        cmd = {std::min(ftg.v, std::max(r.command.v, 0.0)), ftg.omega};
      }
      break;
    case RobotMode::repeat: {
      const auto st = r.repeat->step(r.estimated_pose);
      if (st.done) {
        r.mode = RobotMode::manual;
        r.repeat.reset();
        r.command = {};
        emit({EventKind::repeat_done, 0.0, r.spec.id, "repeat done", {{"robot", r.spec.id}}});
        log_.record(t, "command", {{"status", "repeat_done"}, {"robot", r.spec.id}});
        if (r.spec.id != mission_.active_robot) break;
        if (mission_.phase == MissionPhase::indoor_inspection) set_phase(MissionPhase::return_home, "RepeatDone");
        else if (mission_.phase == MissionPhase::return_home) set_phase(MissionPhase::complete, "RepeatDone");
      } else {
        cmd = st.command;
      }
      break;
    }
  }
  r.applied = {};
  if (cmd.v == 0.0 && cmd.omega == 0.0) return;

  const double dt = config_.dt;
  const Pose2D next(r.pose.x + cmd.v * std::cos(r.pose.theta) * dt, r.pose.y + cmd.v * std::sin(r.pose.theta) * dt,
                    r.pose.theta + cmd.omega * dt);
  if (world_->clearance(next.translation()) < r.spec.footprint_radius) {
    log_.record(t, "collision",
                {{"robot", r.spec.id}, {"x", next.x}, {"y", next.y}, {"mode", to_string(r.mode)}});
    emit({EventKind::collision, 0.0, r.spec.id, std::string(to_string(r.mode)), {{"x", next.x}, {"y", next.y}}});
    if (r.mode == RobotMode::repeat) {
      mission_.failed = true;
      mission_.failure_reason = "collision in repeat mode";
      r.mode = RobotMode::manual;
      r.repeat.reset();
    }
    r.command = {};
    return;
  }

  r.applied = cmd;
  const Transform2D delta = r.pose.inverse() * next;
  r.distance_travelled += distance(r.pose.translation(), next.translation());
  r.pose = next;

  std::normal_distribution<double> nt(0.0, config_.odometry.sigma_translation);
  std::normal_distribution<double> nr(0.0, config_.odometry.sigma_rotation);
  const double ex = config_.odometry.sigma_translation > 0.0 ? nt(r.rng) : 0.0;
  const double ey = config_.odometry.sigma_translation > 0.0 ? nt(r.rng) : 0.0;
  const double et = config_.odometry.sigma_rotation > 0.0 ? nr(r.rng) : 0.0;
  r.estimated_pose = r.estimated_pose * Transform2D(delta.x + ex, delta.y + ey, delta.theta + et);
}

void Simulation::sense_robot(RobotState& r) {
  const double t = time();
  Scan scan = simulate_lidar(*world_, r.pose, r.spec.lidar, r.rng, t);

  PointCloud cloud;
  cloud.frame_id = r.spec.id + "/base";
  cloud.points = scan.hit_points();
  std::optional<IntensityReading> reading;
  Pose2D mount;
  if (r.spec.camera) {
    mount = camera_mount_pose(r.camera_pan, r.spec.mount.offset);
    reading = simulate_camera_intensity(*world_, r.pose * mount, *r.spec.camera, t);
    cloud.descriptors.emplace(cloud.points.size(), 0.0);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
      const Vec2 rel = cloud.points[i] - mount.translation();
      const double bearing = angle_difference(std::atan2(rel.y, rel.x), mount.theta);
      if (std::fabs(bearing) <= r.spec.camera->fov / 2.0 && norm(rel) <= r.spec.camera->max_effective_range)
        (*cloud.descriptors)[i] = reading->mean_gray;
    }
  }
  cloud = voxel_downsample(cloud, config_.scan_voxel);

  if (!r.local_map.empty() && cloud.size() >= 3) {
    const auto fit = icp_register(std::span<const Vec2>(cloud.points), r.local_map.search_grid(), r.estimated_pose,
                                  config_.icp);
    const bool ok = fit.status != IcpStatus::insufficient_overlap && fit.mean_residual < config_.icp_accept_residual &&
        distance(fit.transform.translation(), r.estimated_pose.translation()) < config_.icp_max_correction;
    if (ok) r.estimated_pose = fit.transform;
  }
  update_map(r.local_map, cloud, r.estimated_pose);
  r.last_cloud = cloud;
  r.last_scan_estimate = r.estimated_pose;
  r.recorder->add(r.estimated_pose);

  if (reading) {
    r.last_reading = reading;
    if (detect(*reading, config_.geiger)) {
      const auto obs = project_detection(scan, mount, r.estimated_pose, config_.geiger, t);
      const auto changed = update_annotations(r.local_map, obs, config_.geiger.rule);
      DetectionEvent ev{*reading, obs.size(), r.spec.id};
      r.detections.push_back(ev);
      mission_.detections.push_back(ev);
      log_.record(t, "detection",
                  {{"robot", r.spec.id},
                   {"mean_gray", reading->mean_gray},
                   {"camera_pose", pose_json(reading->camera_pose)},
                   {"annotated_point_count", obs.size()}});
      emit({EventKind::detection, 0.0, r.spec.id, "", {{"annotated_point_count", obs.size()}}});
      if (changed > 0) {
        ojson pts = ojson::array();
        for (const auto& o : obs)
          pts.push_back({o.map_point.x, o.map_point.y, static_cast<int>(o.annotation.level),
                         o.annotation.observation_distance});
        log_.record(t, "annotation",
                    {{"robot", r.spec.id}, {"frame", r.local_map.origin_frame()}, {"changed", changed}, {"points", pts}});
      }
    }
  }

  // Coverage in world cells from ground truth, for the metrics report.
  ojson fresh = ojson::array();
  for (const auto& p : scan.hit_points()) {
    const Vec2 w = r.pose.apply(p);
    const std::pair<std::int64_t, std::int64_t> cell{static_cast<std::int64_t>(std::floor(w.x / config_.coverage_cell)),
                                                     static_cast<std::int64_t>(std::floor(w.y / config_.coverage_cell))};
    if (r.covered.insert(cell).second) fresh.push_back({cell.first, cell.second});
  }
  if (!fresh.empty())
    log_.record(t, "metric", {{"robot", r.spec.id}, {"cell", config_.coverage_cell}, {"new_cells", std::move(fresh)}});

  r.last_scan = std::move(scan);

  if (config_.view_stream_bytes > 0) {
    Message m;
    m.cls = MessageClass::stream;
    m.source = r.node;
    m.destination = kBaseNode;
    m.flow = static_cast<std::uint64_t>(r.node);
    m.payload_size = config_.view_stream_bytes;
    net_->send(std::move(m));
  }
}

std::vector<SimEvent> Simulation::step() {
  // Commands delivered during the previous step, then local base commands.
  auto delivered = std::move(pending_delivered_);
  pending_delivered_.clear();
  for (const auto& m : delivered) apply_delivered(m);
  while (!base_queue_.empty()) {
    const auto c = base_queue_.front();
    base_queue_.pop_front();
    apply_base_command(c);
  }

  // Sensors tick before motion so the first scan anchors each map at the start pose.
  if (steps_ % static_cast<std::uint64_t>(lidar_every_) == 0)
    for (auto& r : robots_) sense_robot(*r);

  std::vector<bool> changed;
  for (auto& r : robots_) {
    const Pose2D before = r->pose;
    const auto mode_before = r->mode;
    move_robot(*r);
    changed.push_back(r->pose.x != before.x || r->pose.y != before.y || r->pose.theta != before.theta || r->mode != mode_before);
  }
  ++steps_;
  for (std::size_t i = 0; i < robots_.size(); ++i)
    if (changed[i]) log_pose(*robots_[i]);

  for (const auto& r : robots_) net_->set_position(r->node, r->pose.translation());
  const auto report = net_->step(config_.dt);
  for (const auto& lc : report.link_changes) {
    const auto& nodes = net_->nodes();
    ojson d{{"a", nodes[static_cast<std::size_t>(lc.a)].name},
            {"b", nodes[static_cast<std::size_t>(lc.b)].name},
            {"up", lc.up},
            {"loss", lc.loss}};
    log_.record(time(), "link_change", d);
    emit({EventKind::link_change, 0.0, "", "", d});
  }
  for (const auto& d : report.delivered)
    if (d.message.cls == MessageClass::control) pending_delivered_.push_back(d.message);

  std::vector<int> touched = report.sessions_progressed;
  for (const auto& [id, st] : logged_session_state_)
    if (net_->session(id).state != st && std::find(touched.begin(), touched.end(), id) == touched.end())
      touched.push_back(id);
  for (const int id : touched) {
    const auto& s = net_->session(id);
    logged_session_state_[id] = s.state;
    ojson d{{"session", id},
            {"state", to_string(s.state)},
            {"chunks_acked", s.chunks_acked},
            {"chunks_total", s.chunks_total}};
    if (s.state == SessionState::complete) d["completed_at"] = s.completed_at;
    log_.record(time(), "transfer_progress", d);
  }
  for (const int id : report.sessions_completed) {
    const auto& s = net_->session(id);
    for (auto& r : robots_) {
      if (r->node != s.to) continue;
      r->received_map = deserialize_map(*s.snapshot);
      emit({EventKind::transfer_complete, 0.0, r->spec.id, "",
            {{"session", id}, {"points", r->received_map->size()}, {"completed_at", s.completed_at}}});
    }
    if (mission_.phase == MissionPhase::map_transfer) set_phase(MissionPhase::await_relocalize, "TransferComplete");
  }

  return std::exchange(events_, {});
}

// ---------------------------------------------------------------------------

ojson MetricsReport::to_json() const {
  ojson j;
  ojson rs = ojson::object();
  for (const auto& [id, m] : robots) rs[id] = {{"distance_m", m.distance}, {"area_m2", m.area}};
  j["robots"] = std::move(rs);
  j["duration_min"] = duration_min;
  j["union_area_m2"] = union_area;
  return j;
}

MetricsReport compute_metrics(const std::vector<std::string>& log_lines) {
  MetricsReport out;
  std::map<std::string, Vec2> last;
  std::map<std::string, std::set<std::pair<std::int64_t, std::int64_t>>> cells;
  std::set<std::pair<std::int64_t, std::int64_t>> all;
  double t_min = INFINITY, t_max = -INFINITY, cell = 1.0;
  for (const auto& line : log_lines) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const double t = j.at("sim_time").get<double>();
    t_min = std::min(t_min, t);
    t_max = std::max(t_max, t);
    const auto kind = j.at("kind").get<std::string>();
    const auto& p = j.at("payload");
    if (kind == "pose") {
      const auto id = p.at("robot").get<std::string>();
      const Vec2 here{p.at("x").get<double>(), p.at("y").get<double>()};
      auto& m = out.robots[id];
      if (auto it = last.find(id); it != last.end()) m.distance += distance(it->second, here);
      last[id] = here;
    } else if (kind == "metric" && p.contains("new_cells")) {
      const auto id = p.at("robot").get<std::string>();
      cell = p.value("cell", 1.0);
      out.robots[id];
      for (const auto& c : p.at("new_cells")) {
        const std::pair<std::int64_t, std::int64_t> key{c.at(0).get<std::int64_t>(), c.at(1).get<std::int64_t>()};
        cells[id].insert(key);
        all.insert(key);
      }
    }
  }
  for (auto& [id, m] : out.robots) m.area = static_cast<double>(cells[id].size()) * cell * cell;
  out.union_area = static_cast<double>(all.size()) * cell * cell;
  out.duration_min = std::isfinite(t_min) ? (t_max - t_min) / 60.0 : 0.0;
  return out;
}

}  // namespace fleetsim
