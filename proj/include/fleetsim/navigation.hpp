#pragma once

#include <span>
#include <vector>

#include "fleetsim/geometry.hpp"
#include "fleetsim/sensors.hpp"

namespace fleetsim {

struct GapParams {
  double clearance_range = 2.0;
  double min_gap_width = 0.2;
  double width_weight = 0.6;
  double heading_weight = 0.4;
  double steer_gain = 1.5;
  double v_max = 0.8;
  double omega_max = 1.2;

  void validate() const;
};

struct VelocityCommand {
  double v = 0.0;
  double omega = 0.0;
  bool operator==(const VelocityCommand&) const = default;
};

struct Gap {
  double start_angle = 0.0;
  double end_angle = 0.0;  // may exceed pi for a gap wrapping through the rear
  double width = 0.0;
  double center = 0.0;     // normalized to (-pi, pi]
  std::size_t first_beam = 0;
  std::size_t last_beam = 0;
};

/// Maximal runs of clear beams (range > clearance or no return), sorted by
/// start angle. On a full-circle scan a run through the rear seam is merged.
std::vector<Gap> find_gaps(const Scan& scan, const GapParams& params);

/// Index into `gaps` of the gap follow_the_gap steers for, or -1 when empty.
std::ptrdiff_t choose_gap(const std::vector<Gap>& gaps, double fov, double goal_heading, const GapParams& params);

/// Steer toward the best-scoring gap; rotate in place toward the goal when
/// every direction is blocked. `goal_heading` is relative to the robot.
VelocityCommand follow_the_gap(const Scan& scan, double goal_heading, const GapParams& params);

struct PathRecord {
  std::vector<Pose2D> waypoints;
  double spacing = 0.5;
};

/// Incremental teach phase: keeps a pose when it is at least `spacing` from
/// the previous waypoint.
class PathRecorder {
 public:
  explicit PathRecorder(double spacing);
  bool add(const Pose2D& pose);
  void reset() { record_.waypoints.clear(); }
  const PathRecord& record() const { return record_; }

 private:
  PathRecord record_;
};

PathRecord teach_record(std::span<const Pose2D> poses, double spacing);

struct RepeatStep {
  bool done = false;
  VelocityCommand command;
  std::size_t target_index = 0;
};

/// Pure pursuit back along a recorded path, last waypoint first.
/// Obstacles are ignored; the caller watches for collisions.
class RepeatController {
 public:
  RepeatController(PathRecord record, GapParams params);
  RepeatStep step(const Pose2D& current);
  std::size_t cursor() const { return cursor_; }
  const PathRecord& record() const { return record_; }

 private:
  PathRecord record_;
  GapParams params_;
  std::size_t cursor_;
};

/// Stateless form: `cursor` carries the pursuit target between calls and
/// only ever decreases.
RepeatStep repeat_path(const PathRecord& record, const Pose2D& current, const GapParams& params,
                       std::size_t& cursor);

}  // namespace fleetsim
