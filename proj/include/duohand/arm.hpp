#pragma once

// Gesture -> trajectory dispatch with the homing-first policy, trapezoidal
// joint-space planning and a fixed-tick executor for a 7-DOF arm.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "duohand/gesture.hpp"

namespace duohand {

inline constexpr std::size_t kArmDof = 7;
using JointVector = std::array<double, kArmDof>;

struct PlanningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArmBusyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PoseConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PoseName { home, pickup, place, place2, place3, top };

inline constexpr std::array<std::string_view, 6> kPoseNames = {"home", "pickup", "place", "place2", "place3", "top"};

constexpr std::string_view to_string(PoseName p) { return kPoseNames[static_cast<std::size_t>(p)]; }

inline std::optional<PoseName> pose_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kPoseNames.size(); ++i)
    if (kPoseNames[i] == s) return static_cast<PoseName>(i);
  return std::nullopt;
}

struct NamedPose {
  PoseName name = PoseName::home;
  JointVector joints{};
  double nominal_duration = 1.0;  // seconds
};

inline constexpr double kHomeElbowRad = 130.0 * std::numbers::pi / 180.0;

/// Six named poses. Durations are the per-gesture execution times; the
/// joint vectors are stand-ins and can be replaced from a pose file.
class PoseLibrary {
 public:
  static PoseLibrary defaults() {
    PoseLibrary lib;
    lib.set({PoseName::home, {0.00, 0.26, 3.14, kHomeElbowRad, 0.00, 0.96, 1.57}, 3.3});
    lib.set({PoseName::pickup, {0.00, 0.90, 3.14, 1.60, 0.00, 1.10, 1.57}, 5.7});
    lib.set({PoseName::place, {3.00, 0.40, 3.14, 1.90, 0.00, 0.90, 1.57}, 6.1});
    lib.set({PoseName::place2, {-0.80, 0.55, 3.14, 1.70, 0.00, 0.95, 1.57}, 6.4});
    lib.set({PoseName::place3, {-0.80, 1.05, 3.14, 1.40, 0.00, 1.20, 1.57}, 7.1});
    lib.set({PoseName::top, {0.60, -0.20, 3.14, 2.00, 0.30, 0.80, 1.57}, 5.9});
    return lib;
  }

  void set(const NamedPose& p) {
    if (!(p.nominal_duration > 0.0)) throw PoseConfigError(std::string(to_string(p.name)) + ": duration must be positive");
    poses_[p.name] = p;
  }

  const NamedPose& get(PoseName n) const {
    auto it = poses_.find(n);
    if (it == poses_.end()) throw PoseConfigError("pose '" + std::string(to_string(n)) + "' not configured");
    return it->second;
  }

  bool complete() const { return poses_.size() == kPoseNames.size(); }

  /// One entry per line: `<name> q1 .. q7 <duration_s>`; '#' starts a comment.
  static PoseLibrary parse(std::istream& is) {
    PoseLibrary lib = defaults();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      std::string name;
      if (!(ss >> name)) continue;
      auto pn = pose_from_string(name);
      if (!pn) throw PoseConfigError("line " + std::to_string(line_no) + ": unknown pose '" + name + "'");
      NamedPose p;
      p.name = *pn;
      for (auto& q : p.joints)
        if (!(ss >> q)) throw PoseConfigError("line " + std::to_string(line_no) + ": expected 7 joint values");
      if (!(ss >> p.nominal_duration)) throw PoseConfigError("line " + std::to_string(line_no) + ": missing duration");
      std::string extra;
      if (ss >> extra) throw PoseConfigError("line " + std::to_string(line_no) + ": trailing field '" + extra + "'");
      lib.set(p);
    }
    return lib;
  }

  void write(std::ostream& os) const {
    os << "# name q1 q2 q3 q4 q5 q6 q7 duration_s\n";
    for (const auto& [n, p] : poses_) {
      os << to_string(n);
      for (double q : p.joints) os << ' ' << q;
      os << ' ' << p.nominal_duration << '\n';
    }
  }

 private:
  std::map<PoseName, NamedPose> poses_;
};

/// Gesture -> target pose; idle has none.
inline std::optional<PoseName> target_for(GestureClass g) {
  switch (g) {
    case GestureClass::idle: return std::nullopt;
    case GestureClass::up_down: return PoseName::home;
    case GestureClass::to_fro: return PoseName::pickup;
    case GestureClass::left_right: return PoseName::place;
    case GestureClass::rectangle: return PoseName::place2;
    case GestureClass::rectangle_flat: return PoseName::place3;
    case GestureClass::circle: return PoseName::top;
  }
  return std::nullopt;
}

struct JointLimits {
  double lower = -2.0 * std::numbers::pi;
  double upper = 2.0 * std::numbers::pi;
};

struct PlannerConfig {
  double v_scale = 0.1;
  double a_scale = 0.05;
  double resolution = 0.05;  // seconds between waypoints
  JointLimits limits;
};

struct Waypoint {
  double t = 0.0;
  JointVector q{};
  std::size_t segment = 0;
};

/// Fraction of the duration spent accelerating (and again decelerating).
/// With unit nominal limits the scaled ramp lasts v_scale / a_scale seconds.
inline double accel_fraction(double duration, double v_scale, double a_scale) {
  if (!(v_scale > 0.0) || !(a_scale > 0.0)) throw PlanningError("velocity and acceleration scaling must be positive");
  return std::min(1.0 / 3.0, (v_scale / a_scale) / duration);
}

/// Normalised trapezoidal position s(tau) in [0, 1] for tau in [0, 1].
inline double trapezoid(double tau, double f) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double v = 1.0 / (1.0 - f);
  const double a = v / f;
  if (tau < f) return 0.5 * a * tau * tau;
  if (tau <= 1.0 - f) return 0.5 * a * f * f + v * (tau - f);
  const double r = 1.0 - tau;
  return 1.0 - 0.5 * a * r * r;
}

/// Peak normalised velocity ds/dtau of the trapezoid.
inline double trapezoid_peak_velocity(double f) { return 1.0 / (1.0 - f); }

inline void check_limits(const JointVector& q, const JointLimits& lim, double t) {
  for (std::size_t j = 0; j < kArmDof; ++j)
    if (q[j] < lim.lower || q[j] > lim.upper || !std::isfinite(q[j]))
      throw PlanningError("joint q" + std::to_string(j + 1) + " = " + std::to_string(q[j]) +
                          " outside limits at t=" + std::to_string(t));
}

/// Timed waypoints from `from` to `to` over `duration`; all joints share one
/// trapezoidal time-scaling. Identical endpoints give a single waypoint.
inline std::vector<Waypoint> plan_segment(const JointVector& from, const JointVector& to, double duration,
                                          const PlannerConfig& cfg = {}) {
  check_limits(from, cfg.limits, 0.0);
  check_limits(to, cfg.limits, duration);
  bool same = true;
  for (std::size_t j = 0; j < kArmDof; ++j) same = same && std::abs(from[j] - to[j]) < 1e-12;
  if (same) return {Waypoint{0.0, to, 0}};
  if (!(duration > 0.0)) throw PlanningError("segment duration must be positive");

  const double f = accel_fraction(duration, cfg.v_scale, cfg.a_scale);
  std::vector<Waypoint> out;
  const auto steps = static_cast<std::size_t>(std::floor(duration / cfg.resolution + 1e-9));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * cfg.resolution;
    if (t >= duration - 1e-9) break;
    const double s = trapezoid(t / duration, f);
    Waypoint w{t, {}, 0};
    for (std::size_t j = 0; j < kArmDof; ++j) w.q[j] = from[j] + s * (to[j] - from[j]);
    check_limits(w.q, cfg.limits, t);
    out.push_back(w);
  }
  out.push_back(Waypoint{duration, to, 0});
  return out;
}

struct PlanSegment {
  PoseName target = PoseName::home;
  double duration = 0.0;
};

struct TrajectoryPlan {
  std::vector<PlanSegment> segments;
  std::vector<Waypoint> waypoints;  // absolute times, strictly increasing
  double v_scale = 0.1;
  double a_scale = 0.05;

  double total_duration() const { return waypoints.empty() ? 0.0 : waypoints.back().t; }
  PoseName final_target() const { return segments.back().target; }
};

/// Chains segments through the given targets starting at `start`.
inline TrajectoryPlan build_plan(const JointVector& start, const std::vector<PoseName>& targets,
                                 const PoseLibrary& lib, const PlannerConfig& cfg = {}) {
  TrajectoryPlan plan;
  plan.v_scale = cfg.v_scale;
  plan.a_scale = cfg.a_scale;
  plan.waypoints.push_back(Waypoint{0.0, start, 0});
  JointVector cur = start;
  double t0 = 0.0;
  for (std::size_t s = 0; s < targets.size(); ++s) {
    const auto& pose = lib.get(targets[s]);
    auto wps = plan_segment(cur, pose.joints, pose.nominal_duration, cfg);
    const double dur = wps.back().t;
    plan.segments.push_back({targets[s], dur});
    for (std::size_t k = 1; k < wps.size(); ++k) {
      wps[k].t += t0;
      wps[k].segment = s;
      plan.waypoints.push_back(wps[k]);
    }
    t0 += dur;
    cur = pose.joints;
  }
  return plan;
}

struct ArmState {
  JointVector current{};
  std::optional<PoseName> at_pose;
  bool busy = false;
};

enum class DispatchStatus { planned, preempt, ignored, busy };

struct DispatchOutcome {
  DispatchStatus status = DispatchStatus::ignored;
  std::optional<TrajectoryPlan> plan;
};

inline constexpr double kDefaultConfidenceThreshold = 0.6;

/// Homing-first dispatch. Homing always plans from the current joints
/// (pre-empting a running plan); any other target goes through home unless
/// the arm is already there.
inline DispatchOutcome dispatch(GestureClass label, double confidence, const ArmState& state,
                                const PoseLibrary& lib, const PlannerConfig& cfg = {},
                                double threshold = kDefaultConfidenceThreshold) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw std::invalid_argument("confidence must lie in [0, 1]");
  const auto target = target_for(label);
  if (!target || confidence < threshold) return {DispatchStatus::ignored, std::nullopt};
  if (*target == PoseName::home) {
    return {state.busy ? DispatchStatus::preempt : DispatchStatus::planned,
            build_plan(state.current, {PoseName::home}, lib, cfg)};
  }
  if (state.busy) return {DispatchStatus::busy, std::nullopt};
  std::vector<PoseName> targets;
  if (state.at_pose != PoseName::home) targets.push_back(PoseName::home);
  targets.push_back(*target);
  return {DispatchStatus::planned, build_plan(state.current, targets, lib, cfg)};
}

/// String-label entry point for wire input.
inline DispatchOutcome dispatch(std::string_view label, double confidence, const ArmState& state,
                                const PoseLibrary& lib, const PlannerConfig& cfg = {},
                                double threshold = kDefaultConfidenceThreshold) {
  const auto g = gesture_from_string(label);
  if (!g) throw ProtocolError("unknown gesture label '" + std::string(label) + "'");
  return dispatch(*g, confidence, state, lib, cfg, threshold);
}

/// One actuation per gesture episode: a repeat of the same label only fires
/// again after an idle or sub-threshold classification, or a different label.
class EpisodeGate {
 public:
  explicit EpisodeGate(double threshold = kDefaultConfidenceThreshold) : threshold_(threshold) {}

  bool admit(GestureClass label, double confidence) {
    if (label == GestureClass::idle || confidence < threshold_) {
      last_.reset();
      return false;
    }
    if (last_ == label) return false;
    last_ = label;
    return true;
  }

  void reset() { last_.reset(); }

 private:
  double threshold_;
  std::optional<GestureClass> last_;
};

struct JointStateRow {
  double t = 0.0;
  JointVector q{};
  std::optional<PoseName> segment;  // target of the active segment
};

/// Fixed-tick executor. Plans start on `start`; every `tick` advances one dt
/// along the piecewise-linear interpolation of the waypoints.
class ArmExecutor {
 public:
  explicit ArmExecutor(const PoseLibrary& lib, double dt = 0.01, std::optional<PoseName> start_at = PoseName::home)
      : dt_(dt) {
    if (!(dt_ > 0.0)) throw std::invalid_argument("executor dt must be positive");
    state_.current = lib.get(start_at.value_or(PoseName::home)).joints;
    state_.at_pose = start_at;
  }

  ArmExecutor(JointVector start, double dt) : dt_(dt) { state_.current = start; }

  const ArmState& state() const { return state_; }
  const std::optional<TrajectoryPlan>& active_plan() const { return plan_; }
  double clock() const { return clock_; }

  void start(TrajectoryPlan plan) {
    if (state_.busy) throw ArmBusyError("arm is executing a plan");
    begin(std::move(plan));
  }

  /// Aborts the running plan at the current tick boundary and starts `plan`,
  /// which must begin at the current joints.
  void preempt(TrajectoryPlan plan) {
    plan_.reset();
    state_.busy = false;
    begin(std::move(plan));
  }

  JointStateRow tick() {
    clock_ += dt_;
    JointStateRow row;
    row.t = clock_;
    if (!plan_) {
      row.q = state_.current;
      return row;
    }
    ++plan_ticks_;
    const double tp = static_cast<double>(plan_ticks_) * dt_;
    const auto& wps = plan_->waypoints;
    if (tp >= plan_->total_duration() - 1e-9) {
      finish();
      row.q = state_.current;
      row.segment = state_.at_pose;
      return row;
    }
    auto it = std::upper_bound(wps.begin(), wps.end(), tp, [](double t, const Waypoint& w) { return t < w.t; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double u = (tp - a.t) / (b.t - a.t);
    for (std::size_t j = 0; j < kArmDof; ++j) state_.current[j] = a.q[j] + u * (b.q[j] - a.q[j]);
    row.q = state_.current;
    row.segment = plan_->segments[b.segment].target;
    return row;
  }

  /// Runs the active plan to completion and returns every tick.
  std::vector<JointStateRow> run_to_completion() {
    std::vector<JointStateRow> rows;
    while (state_.busy) rows.push_back(tick());
    return rows;
  }

 private:
  void begin(TrajectoryPlan plan) {
    if (plan.waypoints.empty() || plan.segments.empty()) throw PlanningError("empty plan");
    for (std::size_t j = 0; j < kArmDof; ++j)
      if (std::abs(plan.waypoints.front().q[j] - state_.current[j]) > 1e-6)
        throw PlanningError("plan does not start at the current joint state");
    plan_ = std::move(plan);
    plan_ticks_ = 0;
    state_.at_pose.reset();
    state_.busy = true;
    if (plan_->total_duration() <= 0.0) finish();
  }

  void finish() {
    state_.current = plan_->waypoints.back().q;
    state_.at_pose = plan_->final_target();
    state_.busy = false;
    plan_.reset();
  }

  double dt_;
  double clock_ = 0.0;
  ArmState state_;
  std::optional<TrajectoryPlan> plan_;
  std::size_t plan_ticks_ = 0;
};

inline void write_joint_header(std::ostream& os) {
  os << "t";
  for (std::size_t j = 1; j <= kArmDof; ++j) os << ",q" << j;
  os << ",segment\n";
}

inline void write_joint_row(std::ostream& os, const JointStateRow& r) {
  os << r.t;
  for (double q : r.q) os << ',' << q;
  os << ',' << (r.segment ? to_string(*r.segment) : std::string_view{}) << '\n';
}

}  // namespace duohand
