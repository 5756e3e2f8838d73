#pragma once

// Unicycle kinematics for the simulated base.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "duohand/base_control.hpp"

namespace duohand {

struct SimulationFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // (-pi, pi]

  bool operator==(const Pose2D&) const = default;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Exact constant-twist arc integration over dt.
inline Pose2D step(const Pose2D& pose, const Twist& twist, double dt) {
  if (!(dt > 0.0)) throw SimulationFault("step: dt must be positive");
  if (!std::isfinite(twist.linear_x) || !std::isfinite(twist.angular_z))
    throw SimulationFault("step: non-finite twist");
  const double v = twist.linear_x, w = twist.angular_z, th = pose.heading;
  Pose2D out = pose;
  if (std::abs(w) < 1e-9) {
    out.x += v * std::cos(th) * dt;
    out.y += v * std::sin(th) * dt;
    out.heading = wrap_angle(th + w * dt);
  } else {
    const double th1 = th + w * dt;
    out.x += (v / w) * (std::sin(th1) - std::sin(th));
    out.y += (v / w) * (std::cos(th) - std::cos(th1));
    out.heading = wrap_angle(th1);
  }
  return out;
}

struct TimedTwist {
  double t = 0.0;  // seconds
  Twist twist;
};

struct TrajectoryRow {
  double t = 0.0;
  Pose2D pose;
  Twist applied;
};

struct DriveSimConfig {
  double dt = 0.01;
  double command_timeout = 0.5;  // seconds without a command before auto-stop
};

/// Fixed-step simulator with zero-order hold on the latest command.
class DriveSim {
 public:
  explicit DriveSim(DriveSimConfig cfg = {}, Pose2D start = {}) : cfg_(cfg), pose_(start) {
    if (!(cfg_.dt > 0.0)) throw SimulationFault("dt must be positive");
  }

  void command(const Twist& tw, double t) {
    if (!std::isfinite(tw.linear_x) || !std::isfinite(tw.angular_z)) throw SimulationFault("non-finite twist");
    held_ = tw;
    last_cmd_t_ = t;
    has_cmd_ = true;
  }

  /// Advances one tick and returns the row describing it.
  TrajectoryRow tick() {
    Twist applied = held_;
    if (!has_cmd_ || t_ - last_cmd_t_ > cfg_.command_timeout + 1e-12) applied = {};
    pose_ = step(pose_, applied, cfg_.dt);
    ++ticks_;
    t_ = static_cast<double>(ticks_) * cfg_.dt;
    return {t_, pose_, applied};
  }

  const Pose2D& pose() const { return pose_; }
  double time() const { return t_; }
  double dt() const { return cfg_.dt; }

 private:
  DriveSimConfig cfg_;
  Pose2D pose_;
  Twist held_;
  double last_cmd_t_ = 0.0;
  bool has_cmd_ = false;
  double t_ = 0.0;
  std::size_t ticks_ = 0;
};

struct DriveRun {
  std::vector<TrajectoryRow> trajectory;
  std::vector<TimedTwist> command_log;
};

/// Replays a time-sorted command stream for `duration` seconds.
inline DriveRun run(std::span<const TimedTwist> stream, double duration, DriveSimConfig cfg = {},
                    Pose2D start = {}) {
  DriveSim sim(cfg, start);
  DriveRun out;
  out.trajectory.push_back({0.0, start, {}});
  std::size_t next = 0;
  const auto ticks = static_cast<std::size_t>(std::llround(duration / cfg.dt));
  for (std::size_t k = 0; k < ticks; ++k) {
    const double now = static_cast<double>(k) * cfg.dt;
    while (next < stream.size() && stream[next].t <= now + 1e-12) {
      sim.command(stream[next].twist, stream[next].t);
      out.command_log.push_back(stream[next]);
      ++next;
    }
    out.trajectory.push_back(sim.tick());
  }
  return out;
}

inline void write_trajectory_csv(std::ostream& os, std::span<const TrajectoryRow> rows) {
  os << "t,x,y,heading,v_cmd,w_cmd\n";
  for (const auto& r : rows)
    os << r.t << ',' << r.pose.x << ',' << r.pose.y << ',' << r.pose.heading << ',' << r.applied.linear_x << ','
       << r.applied.angular_z << '\n';
}

}  // namespace duohand
