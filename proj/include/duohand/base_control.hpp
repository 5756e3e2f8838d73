#pragma once

// Left-hand control law: tilt -> discrete twist, flex bends -> speed caps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "duohand/signal.hpp"

namespace duohand {

struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Base velocity command: m/s forward, rad/s counter-clockwise.
struct Twist {
  double linear_x = 0.0;
  double angular_z = 0.0;

  bool is_zero() const { return linear_x == 0.0 && angular_z == 0.0; }
  bool operator==(const Twist&) const = default;
};

struct SpeedCaps {
  double v_max = 0.50;
  double w_max = 0.50;
  double v_lo = 0.05;
  double v_hi = 1.00;
  double w_lo = 0.05;
  double w_hi = 1.00;

  bool within_bounds() const { return v_lo <= v_max && v_max <= v_hi && w_lo <= w_max && w_max <= w_hi; }
  bool operator==(const SpeedCaps&) const = default;
};

enum class Finger { index, middle };

struct FlexEvent {
  Finger finger = Finger::index;
  double t_ms = 0.0;
};

struct TiltThresholds {
  double command_deg = 15.0;
  double dead_zone_deg = kDefaultDeadZoneDeg;
};

inline constexpr double kIndexGain = 1.10;
inline constexpr double kMiddleGain = 0.90;

/// Bang-bang mapping with pitch taking priority over roll. Inputs inside the
/// dead zone always halt.
inline Twist tilt_to_twist(const TiltPair& tilt, const SpeedCaps& caps, TiltThresholds th = {}) {
  if (!gate_dead_zone(tilt, th.dead_zone_deg)) return {};
  if (tilt.theta > th.command_deg) return {caps.v_max, 0.0};
  if (tilt.theta < -th.command_deg) return {-caps.v_max, 0.0};
  if (tilt.phi > th.command_deg) return {0.0, caps.w_max};
  if (tilt.phi < -th.command_deg) return {0.0, -caps.w_max};
  return {};
}

/// Scales both caps by 1.10 (index) or 0.90 (middle), then clips to bounds.
inline SpeedCaps flex_update_caps(SpeedCaps caps, const FlexEvent& ev) {
  const double g = ev.finger == Finger::index ? kIndexGain : kMiddleGain;
  caps.v_max = std::clamp(caps.v_max * g, caps.v_lo, caps.v_hi);
  caps.w_max = std::clamp(caps.w_max * g, caps.w_lo, caps.w_hi);
  return caps;
}

struct FlexParams {
  int threshold = 600;
  int hysteresis = 50;
  double debounce_ms = 300.0;
};

/// Rising-edge detector for one flex sensor. An event fires when the reading
/// reaches the threshold after it has dropped below threshold - hysteresis
/// and at least debounce_ms has passed since the previous event.
class FlexDetector {
 public:
  explicit FlexDetector(Finger finger = Finger::index, FlexParams params = {})
      : finger_(finger), params_(params) {
    if (params_.threshold < 0 || params_.threshold > 1023)
      throw std::invalid_argument("flex threshold must lie in 0..1023");
  }

  std::optional<FlexEvent> update(int raw, double t_ms) {
    if (raw < params_.threshold - params_.hysteresis) released_ = true;
    if (raw >= params_.threshold && released_ &&
        t_ms - last_event_ms_ >= params_.debounce_ms) {
      released_ = false;
      last_event_ms_ = t_ms;
      return FlexEvent{finger_, t_ms};
    }
    return std::nullopt;
  }

  const FlexParams& params() const { return params_; }

 private:
  Finger finger_;
  FlexParams params_;
  bool released_ = true;
  double last_event_ms_ = -std::numeric_limits<double>::infinity();
};

struct NeutralCalibration {
  double theta_offset = 0.0;
  double phi_offset = 0.0;

  TiltPair apply(const TiltPair& t) const { return {t.theta - theta_offset, t.phi - phi_offset}; }
};

inline constexpr std::size_t kMinCalibrationSamples = 100;

/// Mean tilt at rest. Rejects short or noisy captures and implausible offsets.
inline NeutralCalibration calibrate_neutral(std::span<const TiltPair> samples, double max_std_deg = 10.0) {
  if (samples.size() < kMinCalibrationSamples)
    throw CalibrationError("calibration needs at least 100 samples, got " + std::to_string(samples.size()));
  double mt = 0.0, mp = 0.0;
  for (const auto& s : samples) {
    mt += s.theta;
    mp += s.phi;
  }
  const auto n = static_cast<double>(samples.size());
  mt /= n;
  mp /= n;
  double vt = 0.0, vp = 0.0;
  for (const auto& s : samples) {
    vt += (s.theta - mt) * (s.theta - mt);
    vp += (s.phi - mp) * (s.phi - mp);
  }
  if (std::sqrt(vt / n) > max_std_deg || std::sqrt(vp / n) > max_std_deg)
    throw CalibrationError("calibration unstable: tilt spread exceeds 10 deg");
  if (std::abs(mt) >= 45.0 || std::abs(mp) >= 45.0)
    throw CalibrationError("calibration offsets exceed 45 deg");
  return {mt, mp};
}

struct BaseControllerConfig {
  double alpha = kDefaultLowPassAlpha;
  TiltThresholds thresholds;
  SpeedCaps caps;
  FlexParams index_flex;
  FlexParams middle_flex;
};

struct ControlOutput {
  Twist twist;
  std::optional<FlexEvent> flex;
  TiltPair tilt;
};

/// Single-owner left-hand state machine: filter -> tilt -> calibrate ->
/// dead zone -> twist, plus flex detection feeding the caps.
class BaseController {
 public:
  explicit BaseController(BaseControllerConfig cfg = {})
      : cfg_(cfg),
        caps_(cfg.caps),
        index_(Finger::index, cfg.index_flex),
        middle_(Finger::middle, cfg.middle_flex) {}

  void set_calibration(NeutralCalibration c) { calib_ = c; }
  const NeutralCalibration& calibration() const { return calib_; }
  const SpeedCaps& caps() const { return caps_; }
  const Twist& last_twist() const { return last_; }

  /// One left-hand reading. Flex bends update the caps before the twist is
  /// computed, so the returned twist already reflects them.
  ControlOutput on_sample(const Vec3& acc, int flex_index, int flex_middle, double t_ms) {
    ControlOutput out;
    filtered_ = filtered_ ? low_pass(*filtered_, acc, cfg_.alpha) : acc;
    if (auto ev = index_.update(flex_index, t_ms)) out.flex = ev;
    if (auto ev = middle_.update(flex_middle, t_ms)) out.flex = ev;
    if (out.flex) caps_ = flex_update_caps(caps_, *out.flex);
    out.tilt = calib_.apply(tilt_angles(*filtered_));
    out.twist = tilt_to_twist(out.tilt, caps_, cfg_.thresholds);
    last_ = out.twist;
    return out;
  }

  /// Direct tilt input (already in degrees, calibration not applied).
  Twist on_tilt(const TiltPair& tilt) {
    last_ = tilt_to_twist(tilt, caps_, cfg_.thresholds);
    return last_;
  }

  /// Direct bend event; returns the new caps. The held twist is rescaled so
  /// it never exceeds the caps.
  SpeedCaps on_flex(const FlexEvent& ev) {
    caps_ = flex_update_caps(caps_, ev);
    if (last_.linear_x != 0.0) last_.linear_x = std::copysign(caps_.v_max, last_.linear_x);
    if (last_.angular_z != 0.0) last_.angular_z = std::copysign(caps_.w_max, last_.angular_z);
    return caps_;
  }

  /// Safe-stop.
  void halt() { last_ = {}; }

 private:
  BaseControllerConfig cfg_;
  SpeedCaps caps_;
  FlexDetector index_;
  FlexDetector middle_;
  NeutralCalibration calib_;
  std::optional<Vec3> filtered_;
  Twist last_;
};

}  // namespace duohand
