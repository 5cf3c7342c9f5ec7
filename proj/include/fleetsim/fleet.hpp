#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "fleetsim/map.hpp"
#include "fleetsim/navigation.hpp"
#include "fleetsim/netsim.hpp"
#include "fleetsim/radiation.hpp"
#include "fleetsim/registration.hpp"
#include "fleetsim/sensors.hpp"
#include "json.hpp"

namespace fleetsim {

enum class RobotMode { idle, manual, gap_assist, repeat };
std::string_view to_string(RobotMode m);
RobotMode robot_mode_from_string(std::string_view s);

enum class MissionPhase { outdoor_mapping, map_transfer, await_relocalize, indoor_inspection, return_home, complete };
std::string_view to_string(MissionPhase p);

struct CameraMount {
  double pan_min = -std::numbers::pi;
  double pan_max = std::numbers::pi;
  double offset = 0.2;  // m along the pan direction
};

struct RobotSpec {
  std::string id;
  double footprint_radius = 0.35;
  double v_max = 0.8;
  double omega_max = 1.2;
  LidarSpec lidar;
  std::optional<CameraSpec> camera;
  CameraMount mount;
  RadioProfile radio = RadioProfile::band_915mhz();
  Pose2D start;

  void validate() const;

  static RobotSpec warthog(Pose2D start);
  static RobotSpec hd2(Pose2D start);
};

struct OdometryNoise {
  double sigma_translation = 0.01;  // m per step while moving
  double sigma_rotation = 0.005;    // rad per step while moving
};

struct SimConfig {
  double dt = 0.05;
  double lidar_rate = 10.0;  // Hz; the camera ticks with the lidar
  double watchdog = 0.5;     // s
  OdometryNoise odometry;
  IcpParams icp;
  double scan_voxel = 0.05;
  double map_voxel = 0.10;
  double icp_accept_residual = 0.1;  // scan-to-map fits above this fall back to odometry
  double icp_max_correction = 0.5;   // m; larger jumps away from odometry are refused
  GeigerConfig geiger;
  GapParams gap;
  RelocalizeParams relocalize;
  double path_spacing = 0.5;
  double coverage_cell = 1.0;
  std::size_t transfer_chunk = 65536;
  std::size_t view_stream_bytes = 1500;  // per robot per lidar tick, stream class
  std::uint64_t seed = 0;

  void validate() const;
};

/// Operator command as carried on the wire and through the mesh.
struct OperatorCommand {
  enum class Kind { velocity, set_mode, camera_pan, reloc_guess, start_transfer, advance_phase, abort };
  Kind kind = Kind::velocity;
  std::string robot_id;
  double v = 0.0;
  double omega = 0.0;
  std::optional<double> goal_heading;  // gap_assist steering goal relative to the heading
  RobotMode mode = RobotMode::manual;
  double pan = 0.0;
  Pose2D guess;
  std::string from;
  std::string to;
};

std::string_view wire_type(OperatorCommand::Kind k);
/// {type, robot_id?, payload}
nlohmann::ordered_json command_to_json(const OperatorCommand& c);
/// Throws std::invalid_argument with a readable reason on malformed input.
OperatorCommand command_from_json(const nlohmann::json& j);

/// Newline-delimited mission log of {sim_time, kind, payload} records.
class MissionLog {
 public:
  void record(double sim_time, std::string_view kind, nlohmann::ordered_json payload);
  const std::vector<std::string>& lines() const { return lines_; }
  std::string text() const;
  void attach(std::ostream* out) { out_ = out; }
  /// Records appended since `cursor`; advances it.
  std::vector<std::string> since(std::size_t& cursor) const;

 private:
  std::vector<std::string> lines_;
  std::ostream* out_ = nullptr;
};

enum class EventKind {
  command_applied,
  command_rejected,
  transfer_complete,
  relocalize_success,
  relocalize_failure,
  repeat_done,
  phase_change,
  collision,
  detection,
  link_change,
};
std::string_view to_string(EventKind k);

struct SimEvent {
  EventKind kind;
  double sim_time = 0.0;
  std::string robot_id;
  std::string detail;
  nlohmann::ordered_json data;
};

struct RobotState {
  RobotSpec spec;
  NodeId node = 0;
  Pose2D pose;  // ground truth
  Transform2D estimated_pose;
  bool estimate_valid = true;
  std::string estimate_frame;  // origin frame of local_map
  RobotMode mode = RobotMode::manual;
  AnnotatedMap local_map;
  double camera_pan = 0.0;

  VelocityCommand command;
  std::optional<double> goal_heading;
  double command_time = -1e300;
  VelocityCommand applied;  // what the base actually executed this step

  Rng rng;
  double distance_travelled = 0.0;
  std::optional<Scan> last_scan;
  PointCloud last_cloud;           // downsampled, robot frame
  Transform2D last_scan_estimate;  // estimated pose at the last scan
  std::optional<IntensityReading> last_reading;
  std::vector<DetectionEvent> detections;
  std::unique_ptr<PathRecorder> recorder;
  std::unique_ptr<RepeatController> repeat;
  std::optional<AnnotatedMap> received_map;
  std::set<std::pair<std::int64_t, std::int64_t>> covered;
};

struct MissionState {
  MissionPhase phase = MissionPhase::outdoor_mapping;
  std::string active_robot;
  std::optional<int> transfer;
  std::string transfer_from;
  std::string transfer_to;
  std::vector<DetectionEvent> detections;
  bool failed = false;
  std::string failure_reason;
};

/// The single deterministic simulation loop: robots, base station radio,
/// mesh network and the mission state machine.
class Simulation {
 public:
  static constexpr NodeId kBaseNode = 0;

  Simulation(WorldModel world, std::vector<RobotSpec> robots, Vec2 base_position, RadioProfile base_radio,
             SimConfig config);

  /// Queues a command at the base station. Robot commands travel through the
  /// mesh as control messages; base commands apply at the next step.
  /// Returns the rejection reason when it is refused at the base.
  std::optional<std::string> submit(const OperatorCommand& cmd);

  /// Advances one step of config().dt and returns the events it raised.
  std::vector<SimEvent> step();

  double time() const { return static_cast<double>(steps_) * config_.dt; }
  std::uint64_t steps() const { return steps_; }
  const SimConfig& config() const { return config_; }
  const WorldModel& world() const { return *world_; }
  const MissionState& mission() const { return mission_; }
  const std::vector<std::unique_ptr<RobotState>>& robots() const { return robots_; }
  const RobotState& robot(const std::string& id) const;
  const RobotState* find_robot(const std::string& id) const;
  const Network& network() const { return *net_; }
  Network& network() { return *net_; }
  MissionLog& log() { return log_; }
  const MissionLog& log() const { return log_; }

  /// The map holding the mission result: the merged global map once the
  /// indoor robot has relocalized, otherwise the first robot's map.
  const AnnotatedMap& global_map() const;

  /// Scripted link outage between two named nodes ("base" or a robot id).
  void force_link_down(const std::string& a, const std::string& b, bool down);

 private:
  RobotState& robot_mut(const std::string& id);
  NodeId node_of(const std::string& name) const;
  void emit(SimEvent e);
  void apply_delivered(const Message& m);
  void apply_base_command(const OperatorCommand& c);
  std::optional<std::string> check_robot_command(const RobotState& r, const OperatorCommand& c) const;
  void apply_robot_command(RobotState& r, const OperatorCommand& c);
  void move_robot(RobotState& r);
  void sense_robot(RobotState& r);
  void relocalize_robot(RobotState& r, const Pose2D& guess);
  void set_phase(MissionPhase p, std::string_view cause);
  void log_pose(const RobotState& r);

  std::shared_ptr<const WorldModel> world_;
  SimConfig config_;
  std::vector<std::unique_ptr<RobotState>> robots_;
  std::unique_ptr<Network> net_;
  MissionState mission_;
  MissionLog log_;
  std::deque<OperatorCommand> base_queue_;
  std::vector<Message> pending_delivered_;
  std::vector<SimEvent> events_;
  std::map<int, SessionState> logged_session_state_;
  std::uint64_t steps_ = 0;
  int lidar_every_ = 2;
  std::optional<std::size_t> global_owner_;
};

struct MetricsReport {
  struct PerRobot {
    double distance = 0.0;  // m
    double area = 0.0;      // m²
  };
  std::map<std::string, PerRobot> robots;
  double duration_min = 0.0;
  double union_area = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Table-style summary rebuilt from a mission log.
MetricsReport compute_metrics(const std::vector<std::string>& log_lines);

}  // namespace fleetsim
