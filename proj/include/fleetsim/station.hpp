#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fleetsim/fleet.hpp"
#include "json.hpp"

namespace fleetsim {

/// Scripted operator driving: steer toward each waypoint in turn from the
/// robot's true pose, streaming velocity commands through the base station.
struct DriveDirective {
  std::string robot;
  std::vector<Vec2> waypoints;
  double speed = 1.0;       // fraction of the robot's v_max
  bool gap_assist = false;  // send goal headings instead of raw turn rates
  int laps = 1;
  std::optional<double> stop_after_distance;  // m travelled from the directive start
  double tolerance = 0.3;
};

/// Operator relocalization guess built from the robot's true pose expressed
/// in the first robot's start frame, plus a deliberate offset.
struct GuessDirective {
  std::string robot;
  Pose2D offset;
};

struct LinkDirective {
  std::string a;
  std::string b;
  bool down = true;
};

struct ScriptStep {
  std::optional<double> at;         // sim time
  std::optional<std::string> await;  // event name, see ScriptRunner
  std::optional<OperatorCommand> command;
  std::optional<DriveDirective> drive;
  std::optional<GuessDirective> guess;
  std::optional<LinkDirective> link;
};

struct Scenario {
  std::string name;
  WorldModel world;
  std::vector<RobotSpec> robots;
  Vec2 base_position;
  RadioProfile base_radio;
  SimConfig config;
  double time_cap = 900.0;
  std::vector<ScriptStep> script;
};

/// Validates the whole document; errors carry a JSON pointer.
Scenario load_scenario(const nlohmann::json& doc);
Scenario load_scenario_file(const std::filesystem::path& path);
ScriptStep parse_script_step(const nlohmann::json& j, const std::string& path);

Simulation make_simulation(const Scenario& s);

/// Executes an operator script against a simulation. Await names:
/// TransferComplete, RelocalizeSuccess, RelocalizeFailure, RepeatDone,
/// Detection, Collision, Phase:<PhaseName>, Arrived:<robot_id>.
class ScriptRunner {
 public:
  explicit ScriptRunner(std::vector<ScriptStep> steps);

  /// Issues due steps and the active driving policies' commands.
  void before_step(Simulation& sim);
  void observe(const std::vector<SimEvent>& events);

  bool finished() const { return next_ >= steps_.size() && policies_.empty(); }
  /// Event name the script is blocked on, if any.
  std::optional<std::string> waiting_for() const;

 private:
  struct Policy {
    DriveDirective d;
    std::size_t index = 0;
    int lap = 0;
    double start_distance = 0.0;
  };

  bool step_due(const ScriptStep& s, const Simulation& sim) const;
  void execute(const ScriptStep& s, Simulation& sim);
  void drive(Simulation& sim);

  std::vector<ScriptStep> steps_;
  std::size_t next_ = 0;
  std::map<std::string, Policy> policies_;
  std::vector<std::string> seen_;  // events since the last executed step
  std::vector<std::string> arrivals_;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<double> time_cap;
  std::optional<std::filesystem::path> out_dir;
  bool raster = true;
};

enum class RunStatus { ok = 0, mission_failure = 1, invalid_scenario = 2, script_deadlock = 3 };

struct RunResult {
  RunStatus status = RunStatus::ok;
  std::string message;
  MissionPhase phase = MissionPhase::outdoor_mapping;
  double sim_time = 0.0;
  std::string log_digest;  // sha256 of the mission log
  std::string map_digest;  // sha256 of the map export
  MetricsReport metrics;
  std::vector<std::uint8_t> map_bytes;
  std::vector<std::string> log_lines;
};

/// Per-step hook for live mode; return false to stop the run.
using StepHook = std::function<bool(Simulation&, const std::vector<SimEvent>&)>;

RunResult run_scenario(const Scenario& scenario, const RunOptions& options, const StepHook& hook = {});

/// Appends the end-of-run record and fills digests, map bytes and metrics.
RunResult summarize_run(Simulation& sim, RunResult res);

/// Re-executes the commands recorded in a mission log, without the script.
RunResult replay_log(const Scenario& scenario, const std::vector<std::string>& log_lines, const RunOptions& options);

/// Writes mission.log, map.bin, map.txt, metrics.json and optionally map.ppm.
void write_artifacts(const std::filesystem::path& dir, const Simulation& sim, const RunResult& result, bool raster);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

// ---------------------------------------------------------------------------
// Raster rendering

struct Rgb {
  std::uint8_t r = 255, g = 255, b = 255;
  bool operator==(const Rgb&) const = default;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;  // row-major, row 0 at the top (max y)
  Rgb at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct RenderStyle {
  double pixels_per_meter = 10.0;
  std::optional<Bounds> extent;  // map-frame window; default fits the points
  double margin = 2.0;
  Rgb background{255, 255, 255};
  Rgb point{150, 150, 150};
  Rgb yellow{235, 200, 0};
  Rgb orange{240, 120, 0};
  Rgb red{220, 0, 0};
  Rgb hd2_path{30, 80, 230};
  Rgb warthog_path{255, 150, 40};
  Rgb other_path{40, 160, 60};
};

struct Trajectory {
  std::string robot;
  std::vector<Vec2> points;  // map frame
};

/// Estimated trajectories from a mission log, restricted to records in `frame`.
std::vector<Trajectory> trajectories_from_log(const std::vector<std::string>& log_lines, const std::string& frame);

struct RenderedMap {
  Image image;
  Bounds extent;
  double pixels_per_meter = 10.0;
  /// Map-frame centre of pixel (px, py).
  Vec2 pixel_center(int px, int py) const;
};

RenderedMap render_map(const MapFileContents& map, const std::vector<Trajectory>& trajectories,
                       const RenderStyle& style = {});
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace fleetsim
