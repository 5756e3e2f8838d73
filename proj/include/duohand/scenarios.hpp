#pragma once

// Scripted replay streams used by the samples, the CLI and the tests, plus
// a phase checker for the 10 s speed-modulation run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "duohand/drive_sim.hpp"
#include "duohand/protocol.hpp"
#include "duohand/synth.hpp"

namespace duohand {

struct SpeedProfileScript {
  double period_ms = 10.0;
  double duration_ms = 10000.0;
  double tilt_on_ms = 1500.0;
  double tilt_off_ms = 7500.0;
  double tilt_deg = 30.0;
  int index_bends = 8;
  double index_start_ms = 1700.0;
  int middle_bends = 7;
  double middle_start_ms = 6200.0;
  double bend_spacing_ms = 180.0;
  double bend_hold_ms = 20.0;
  int flex_rest = 300;
  int flex_bent = 700;
  double debounce_ms = 150.0;  // the bends above are closer than the 300 ms default
};

/// Left-glove stream: hold level, tilt forward while bending the index finger
/// to raise the caps, hold, bend the middle finger to lower them, level again.
inline std::vector<ReplayEntry> speed_profile_script(const SpeedProfileScript& s = {}) {
  std::vector<ReplayEntry> out;
  const double r = s.tilt_deg * std::numbers::pi / 180.0;
  auto bent = [&](double t, double start, int n) {
    for (int k = 0; k < n; ++k) {
      const double b = start + k * s.bend_spacing_ms;
      if (t >= b && t < b + s.bend_hold_ms) return true;
    }
    return false;
  };
  for (double t = 0.0; t < s.duration_ms - 1e-9; t += s.period_ms) {
    LeftLine l;
    const bool tilted = t >= s.tilt_on_ms && t < s.tilt_off_ms;
    l.acc = tilted ? Vec3{std::sin(r), 0.0, std::cos(r)} : Vec3{0.0, 0.0, 1.0};
    l.flex_index = bent(t, s.index_start_ms, s.index_bends) ? s.flex_bent : s.flex_rest;
    l.flex_middle = bent(t, s.middle_start_ms, s.middle_bends) ? s.flex_bent : s.flex_rest;
    // Round-trip through the wire format so the script matches a file replay.
    out.push_back({std::round(t), parse_line(format_line(l))});
  }
  return out;
}

struct PhaseResult {
  std::string name;
  double from_s = 0.0;
  double to_s = 0.0;
  double min_v = 0.0;
  double max_v = 0.0;
  double end_v = 0.0;
  bool ok = false;
};

struct ProfileCheck {
  std::vector<PhaseResult> phases;
  bool ok() const {
    return !phases.empty() && std::all_of(phases.begin(), phases.end(), [](const auto& p) { return p.ok; });
  }
};

/// Checks the commanded-speed trace against hold / ramp up / steady / ramp
/// down / hold. `settle_s` is skipped after each boundary for filter lag.
inline ProfileCheck check_speed_profile(std::span<const TrajectoryRow> rows, double v0 = 0.50, double v_top = 1.00,
                                        double v_end = 1.00 * std::pow(0.9, 7), double tol = 0.01,
                                        double settle_s = 0.1) {
  struct Spec {
    const char* name;
    double from, to;
    int kind;  // 0 hold, 1 ramp up, 2 steady, 3 ramp down
  };
  const Spec specs[] = {{"initial hold", 0.0, 1.5, 0},
                        {"cap increase", 1.5, 3.0, 1},
                        {"steady at cap", 3.0, 6.0, 2},
                        {"cap decrease", 6.0, 7.5, 3},
                        {"final hold", 7.5, 10.0, 0}};
  ProfileCheck out;
  for (const auto& sp : specs) {
    PhaseResult p{sp.name, sp.from, sp.to, 1e9, -1e9, 0.0, true};
    double prev = std::nan("");
    bool any = false;
    for (const auto& r : rows) {
      if (r.t <= sp.from + settle_s || r.t > sp.to + 1e-9) continue;
      const double v = r.applied.linear_x;
      any = true;
      p.min_v = std::min(p.min_v, v);
      p.max_v = std::max(p.max_v, v);
      p.end_v = v;
      if (sp.kind == 1 && !std::isnan(prev) && v < prev - 1e-12) p.ok = false;
      if (sp.kind == 3 && !std::isnan(prev) && v > prev + 1e-12) p.ok = false;
      prev = v;
    }
    if (!any) p.ok = false;
    switch (sp.kind) {
      case 0: p.ok = p.ok && std::abs(p.min_v) <= tol && std::abs(p.max_v) <= tol; break;
      case 1: p.ok = p.ok && std::abs(p.min_v - v0) <= tol && std::abs(p.end_v - v_top) <= tol; break;
      case 2: p.ok = p.ok && std::abs(p.min_v - v_top) <= tol && std::abs(p.max_v - v_top) <= tol; break;
      case 3: p.ok = p.ok && std::abs(p.max_v - v_top) <= tol && std::abs(p.end_v - v_end) <= tol; break;
    }
    out.phases.push_back(p);
  }
  return out;
}

struct GestureScriptStep {
  double t_ms;
  GestureClass label;
  double confidence;
};

/// Pre-classified right-glove stream. An idle line follows each gesture so
/// the next one starts a new episode.
inline std::vector<ReplayEntry> gesture_script(std::span<const GestureScriptStep> steps) {
  std::vector<ReplayEntry> out;
  for (const auto& s : steps) {
    out.push_back({s.t_ms, RightLine{s.label, s.confidence}});
    out.push_back({s.t_ms + 100.0, RightLine{GestureClass::idle, 0.99}});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t_ms < b.t_ms; });
  return out;
}

/// Homing then pickup, the second request arriving after the first plan ends.
inline std::vector<ReplayEntry> homing_then_pickup_script() {
  const GestureScriptStep steps[] = {{500.0, GestureClass::up_down, 0.95}, {4000.0, GestureClass::to_fro, 0.92}};
  return gesture_script(steps);
}

/// Raw 9-axis idle stream with a level left glove alongside.
inline std::vector<ReplayEntry> idle_script(double duration_ms, std::uint64_t seed, double fs = kDefaultSampleRateHz) {
  SynthSpec s;
  s.gesture = GestureClass::idle;
  s.duration_ms = duration_ms;
  s.fs = fs;
  s.seed = seed;
  const auto samples = synth_gesture(s);
  std::vector<ReplayEntry> out;
  out.reserve(2 * samples.size());
  for (const auto& x : samples) {
    const double t = std::round(x.t_ms);
    out.push_back({t, LeftLine{{0.0, 0.0, 1.0}, 300, 300}});
    out.push_back({t, parse_line(format_line(to_imu_line(x)))});
  }
  return out;
}

/// Both hands at once: drive a square-ish path while the arm runs two plans.
inline std::vector<ReplayEntry> drive_and_grab_script() {
  std::vector<ReplayEntry> out;
  const double r = 30.0 * std::numbers::pi / 180.0;
  for (double t = 0.0; t < 12000.0; t += 10.0) {
    Vec3 acc{0.0, 0.0, 1.0};
    const double phase = std::fmod(t, 3000.0);
    if (t >= 500.0 && t < 11000.0) {
      if (phase < 2000.0)
        acc = {std::sin(r), 0.0, std::cos(r)};
      else
        acc = {0.0, std::sin(r), std::cos(r)};
    }
    out.push_back({t, LeftLine{{std::round(acc[0] * 1000) / 1000, std::round(acc[1] * 1000) / 1000,
                                std::round(acc[2] * 1000) / 1000},
                               300, 300}});
  }
  const GestureScriptStep steps[] = {{1000.0, GestureClass::circle, 0.91}, {8000.0, GestureClass::up_down, 0.97}};
  for (const auto& e : gesture_script(steps)) out.push_back(e);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t_ms < b.t_ms; });
  return out;
}

}  // namespace duohand
