#pragma once

// Raw IMU sample types, digital low-pass, tilt angles, dead zone and windowing.

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "duohand/gesture.hpp"

namespace duohand {

using Vec3 = std::array<double, 3>;

struct FilterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OrientationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct WindowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One 9-axis reading. acc in g, gyr in deg/s, mag in uT.
struct ImuSample {
  double t_ms = 0.0;
  Vec3 acc{};
  Vec3 gyr{};
  Vec3 mag{};

  /// Axis-major view: accX..accZ, gyrX..gyrZ, magX..magZ.
  double axis(std::size_t a) const {
    if (a < 3) return acc[a];
    if (a < 6) return gyr[a - 3];
    return mag[a - 6];
  }

  bool operator==(const ImuSample&) const = default;
};

inline constexpr std::size_t kNumAxes = 9;
inline constexpr std::array<const char*, kNumAxes> kAxisNames = {
    "accX", "accY", "accZ", "gyrX", "gyrY", "gyrZ", "magX", "magY", "magZ"};

/// Pitch (theta) and roll (phi), degrees.
struct TiltPair {
  double theta = 0.0;
  double phi = 0.0;

  bool operator==(const TiltPair&) const = default;
};

inline constexpr double kDefaultSampleRateHz = 100.0;
inline constexpr double kDefaultWindowMs = 2000.0;
inline constexpr double kDefaultHopMs = 250.0;
inline constexpr double kDefaultLowPassAlpha = 0.2;
inline constexpr double kDefaultDeadZoneDeg = 5.0;

constexpr std::size_t samples_per_window(double fs_hz, double window_ms) {
  return static_cast<std::size_t>(fs_hz * window_ms / 1000.0 + 0.5);
}

struct ImuWindow {
  std::vector<ImuSample> samples;
  double fs = kDefaultSampleRateHz;
  std::optional<GestureClass> label;

  /// Copy of one axis as a contiguous series.
  std::vector<double> axis_series(std::size_t a) const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.axis(a));
    return out;
  }
};

namespace detail {
inline bool finite3(const Vec3& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}
}  // namespace detail

/// First-order exponential smoother: alpha * raw + (1 - alpha) * prev.
inline Vec3 low_pass(const Vec3& prev, const Vec3& raw, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw FilterError("low_pass: alpha must lie in (0, 1]");
  if (!detail::finite3(prev) || !detail::finite3(raw))
    throw FilterError("low_pass: non-finite input");
  Vec3 out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = alpha * raw[i] + (1.0 - alpha) * prev[i];
  return out;
}

inline double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }
inline double deg_to_rad(double d) { return d * std::numbers::pi / 180.0; }

/// Pitch and roll of the gravity vector. Scale invariant in acc.
inline TiltPair tilt_angles(const Vec3& acc) {
  if (!detail::finite3(acc)) throw OrientationError("tilt_angles: non-finite acceleration");
  const double ax = acc[0], ay = acc[1], az = acc[2];
  if (ax == 0.0 && ay == 0.0 && az == 0.0)
    throw OrientationError("tilt_angles: zero acceleration vector, orientation undefined");
  // atan(a / 0) evaluates to +-90 deg, which is the correct limit.
  const double theta = std::atan(ax / std::sqrt(ay * ay + az * az));
  const double phi = std::atan(ay / std::sqrt(ax * ax + az * az));
  return {rad_to_deg(theta), rad_to_deg(phi)};
}

/// Returns nothing when both angles sit strictly inside the dead zone.
inline std::optional<TiltPair> gate_dead_zone(const TiltPair& tilt, double dz_deg = kDefaultDeadZoneDeg) {
  if (std::abs(tilt.theta) < dz_deg && std::abs(tilt.phi) < dz_deg) return std::nullopt;
  return tilt;
}

/// Checks sample count and spacing of a window. Throws WindowError.
inline void validate_window(const ImuWindow& w, std::size_t expected_samples) {
  if (w.samples.size() != expected_samples)
    throw WindowError("window has " + std::to_string(w.samples.size()) + " samples, expected " +
                      std::to_string(expected_samples));
  if (!(w.fs > 0.0)) throw WindowError("window sample rate must be positive");
  const double period = 1000.0 / w.fs;
  for (std::size_t i = 1; i < w.samples.size(); ++i) {
    const double dt = w.samples[i].t_ms - w.samples[i - 1].t_ms;
    if (dt <= 0.0 || std::abs(dt - period) > period)
      throw WindowError("window sample " + std::to_string(i) + " breaks uniform spacing");
  }
}

/// Cuts a sorted stream into fixed windows advanced by hop_ms. The partial
/// tail is dropped; a stream shorter than one window yields nothing.
inline std::vector<ImuWindow> window_stream(std::span<const ImuSample> stream,
                                            double fs = kDefaultSampleRateHz,
                                            double window_ms = kDefaultWindowMs,
                                            double hop_ms = kDefaultHopMs,
                                            std::optional<GestureClass> label = std::nullopt) {
  if (!(fs > 0.0) || !(window_ms > 0.0) || !(hop_ms > 0.0))
    throw WindowError("window_stream: fs, window and hop must be positive");
  const double hop_samples_exact = hop_ms * fs / 1000.0;
  const auto hop = static_cast<std::size_t>(std::llround(hop_samples_exact));
  if (hop == 0 || std::abs(hop_samples_exact - static_cast<double>(hop)) > 1e-9)
    throw WindowError("window_stream: hop must be a whole number of sample periods");
  const std::size_t n = samples_per_window(fs, window_ms);
  for (std::size_t i = 1; i < stream.size(); ++i) {
    if (!(stream[i].t_ms > stream[i - 1].t_ms))
      throw WindowError("window_stream: timestamps must be strictly increasing");
  }

  std::vector<ImuWindow> out;
  for (std::size_t start = 0; start + n <= stream.size(); start += hop) {
    ImuWindow w;
    w.fs = fs;
    w.label = label;
    w.samples.assign(stream.begin() + static_cast<std::ptrdiff_t>(start),
                     stream.begin() + static_cast<std::ptrdiff_t>(start + n));
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace duohand
