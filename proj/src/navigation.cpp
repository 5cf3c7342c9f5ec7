#include "fleetsim/navigation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fleetsim {

void GapParams::validate() const {
  if (width_weight < 0.0 || heading_weight < 0.0 || !(width_weight + heading_weight > 0.0))
    throw std::invalid_argument("gap weights must be non-negative with a positive sum");
  if (!(v_max > 0.0 && omega_max > 0.0 && steer_gain > 0.0)) throw std::invalid_argument("gap limits must be positive");
}

std::vector<Gap> find_gaps(const Scan& scan, const GapParams& params) {
  const std::size_t n = scan.beams.size();
  std::vector<Gap> gaps;
  if (n == 0) return gaps;
  const double inc = scan.angular_increment();
  auto clear = [&](std::size_t i) {
    const Beam& b = scan.beams[i];
    return !b.hit || b.range > params.clearance_range;
  };

  struct Run {
    std::size_t first, last, count;
    bool wraps;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < n;) {
    if (!clear(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && clear(j + 1)) ++j;
    runs.push_back({i, j, j - i + 1, false});
    i = j + 1;
  }

  const bool full_circle = scan.fov >= 2.0 * std::numbers::pi - 1e-9;
  if (full_circle && runs.size() > 1 && runs.front().first == 0 && runs.back().last == n - 1) {
    Run merged{runs.back().first, runs.front().last, runs.back().count + runs.front().count, true};
    runs.erase(runs.begin());
    runs.back() = merged;
  }

  for (const auto& r : runs) {
    Gap g;
    g.first_beam = r.first;
    g.last_beam = r.last;
    g.width = static_cast<double>(r.count) * inc;
    const double a_first = scan.beams[r.first].angle;
    const double a_last = scan.beams[r.last].angle + (r.wraps ? 2.0 * std::numbers::pi : 0.0);
    g.start_angle = a_first - inc / 2.0;
    g.end_angle = a_last + inc / 2.0;
    g.center = r.wraps ? normalize_angle((a_first + a_last) / 2.0) : (a_first + a_last) / 2.0;
    if (g.width < params.min_gap_width) continue;
    gaps.push_back(g);
  }
  std::sort(gaps.begin(), gaps.end(), [](const Gap& a, const Gap& b) { return a.start_angle < b.start_angle; });
  return gaps;
}

std::ptrdiff_t choose_gap(const std::vector<Gap>& gaps, double fov, double goal_heading, const GapParams& params) {
  std::ptrdiff_t best = -1;
  double best_score = 0.0, best_offset = 0.0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const Gap& g = gaps[i];
    const double score =
        params.width_weight * (g.width / fov) + params.heading_weight * std::cos(g.center - goal_heading);
    const double offset = std::fabs(angle_difference(g.center, goal_heading));
    // Gaps are sorted by start angle, so keeping the earlier one on a full tie
    // implements the lowest-start rule.
    if (best < 0 || score > best_score || (score == best_score && offset < best_offset)) {
      best = static_cast<std::ptrdiff_t>(i);
      best_score = score;
      best_offset = offset;
    }
  }
  return best;
}

VelocityCommand follow_the_gap(const Scan& scan, double goal_heading, const GapParams& params) {
  const auto gaps = find_gaps(scan, params);
  const auto best = choose_gap(gaps, scan.fov, goal_heading, params);
  if (best < 0) return {0.0, goal_heading >= 0.0 ? params.omega_max : -params.omega_max};
  const double center = gaps[static_cast<std::size_t>(best)].center;
  VelocityCommand cmd;
  cmd.omega = std::clamp(params.steer_gain * center, -params.omega_max, params.omega_max);
  cmd.v = params.v_max * std::max(0.0, 1.0 - std::fabs(center) / (scan.fov / 2.0));
  return cmd;
}

PathRecorder::PathRecorder(double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("path spacing must be positive");
  record_.spacing = spacing;
}

bool PathRecorder::add(const Pose2D& pose) {
  if (!record_.waypoints.empty() &&
      distance(record_.waypoints.back().translation(), pose.translation()) < record_.spacing)
    return false;
  record_.waypoints.push_back(pose);
  return true;
}

PathRecord teach_record(std::span<const Pose2D> poses, double spacing) {
  PathRecorder rec(spacing);
  for (const auto& p : poses) rec.add(p);
  return rec.record();
}

RepeatStep repeat_path(const PathRecord& record, const Pose2D& current, const GapParams& params,
                       std::size_t& cursor) {
  if (record.waypoints.empty()) throw std::invalid_argument("repeat_path needs a non-empty record");
  cursor = std::min(cursor, record.waypoints.size() - 1);
  RepeatStep out;
  const Vec2 here = current.translation();
  if (distance(here, record.waypoints.front().translation()) <= record.spacing / 2.0) {
    out.done = true;
    out.target_index = 0;
    cursor = 0;
    return out;
  }
  const double lookahead = 2.0 * record.spacing;
  while (cursor > 0 && distance(here, record.waypoints[cursor].translation()) < lookahead) --cursor;
  const Vec2 to = record.waypoints[cursor].translation() - here;
  const double err = angle_difference(std::atan2(to.y, to.x), current.theta);
  out.command.omega = std::clamp(params.steer_gain * err, -params.omega_max, params.omega_max);
  out.command.v = params.v_max * std::max(0.0, 1.0 - std::fabs(err) / (std::numbers::pi / 2.0));
  out.target_index = cursor;
  return out;
}

RepeatController::RepeatController(PathRecord record, GapParams params)
    : record_(std::move(record)), params_(params), cursor_(0) {
  if (record_.waypoints.empty()) throw std::invalid_argument("cannot repeat an empty path");
  cursor_ = record_.waypoints.size() - 1;
}

RepeatStep RepeatController::step(const Pose2D& current) { return repeat_path(record_, current, params_, cursor_); }

}  // namespace fleetsim
