#pragma once

// Parametric generators for the seven gesture classes and the labelled
// dataset builder that stands in for recorded glove data.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "duohand/gesture.hpp"
#include "duohand/signal.hpp"
#include "duohand/spectral.hpp"

namespace duohand {

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultAmplitudeG = 1.5;
inline constexpr double kDefaultGestureFreqHz = 2.0;
inline constexpr double kDefaultNoiseSigmaG = 0.15;

// gyr is derived from the motion component of acc; mag is a fixed earth
// field plus a small motion-coupled term.
inline constexpr double kGyroPerG = 30.0;
inline constexpr double kMagPerG = 4.0;
inline constexpr Vec3 kEarthField = {22.0, 5.0, -42.0};

struct SynthSpec {
  GestureClass gesture = GestureClass::idle;
  double duration_ms = kDefaultWindowMs;
  double fs = kDefaultSampleRateHz;
  double amplitude = kDefaultAmplitudeG;
  double freq = kDefaultGestureFreqHz;
  double noise_sigma = kDefaultNoiseSigmaG;
  std::uint64_t seed = 0;
  double phase = 0.0;     // radians, applied to the periodic template
  double t0_ms = 0.0;     // timestamp of the first sample

  void validate() const {
    if (!(fs > 0.0)) throw GenerationError("fs must be positive");
    if (!(duration_ms >= kDefaultWindowMs)) throw GenerationError("duration must be at least 2000 ms");
    if (!(noise_sigma >= 0.0)) throw GenerationError("noise_sigma must be non-negative");
    if (!(freq > 0.0) || !std::isfinite(amplitude)) throw GenerationError("freq must be positive, amplitude finite");
  }
};

/// Motion component of the accelerometer (without gravity) at time t seconds.
inline Vec3 gesture_motion(GestureClass g, double t, double amplitude, double freq, double phase) {
  const double w = 2.0 * std::numbers::pi * freq * t + phase;
  const double a = amplitude;
  switch (g) {
    case GestureClass::idle:
      return {0.0, 0.0, 0.0};
    case GestureClass::up_down:
      return {0.0, 0.0, a * std::sin(w)};
    case GestureClass::to_fro:
      return {a * std::sin(w), 0.0, 0.0};
    case GestureClass::left_right:
      return {0.0, a * std::sin(w), 0.0};
    case GestureClass::circle:
      return {a * std::cos(w), a * std::sin(w), 0.0};
    case GestureClass::rectangle:
    case GestureClass::rectangle_flat: {
      // Four equal segments per cycle: +first, +second, -first, -second.
      double cyc = std::fmod(w / (2.0 * std::numbers::pi), 1.0);
      if (cyc < 0.0) cyc += 1.0;
      const int seg = static_cast<int>(cyc * 4.0) % 4;
      const double v = seg < 2 ? a : -a;
      const bool first_axis = seg % 2 == 0;
      const std::size_t second = g == GestureClass::rectangle ? 1 : 2;
      Vec3 out{0.0, 0.0, 0.0};
      out[first_axis ? 0 : second] = v;
      return out;
    }
  }
  return {0.0, 0.0, 0.0};
}

inline std::vector<ImuSample> synth_gesture(const SynthSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::floor(spec.duration_ms * spec.fs / 1000.0 + 1e-9));
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sig = spec.noise_sigma;

  std::vector<ImuSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.fs;
    const Vec3 m = gesture_motion(spec.gesture, t, spec.amplitude, spec.freq, spec.phase);
    const Vec3 prev = gesture_motion(spec.gesture, t - 1.0 / spec.fs, spec.amplitude, spec.freq, spec.phase);
    // Angular rate follows the change of motion, scaled so a sinusoid keeps its amplitude.
    const double rate_gain = spec.fs / (2.0 * std::numbers::pi * spec.freq);
    ImuSample s;
    s.t_ms = spec.t0_ms + 1000.0 * t;
    s.acc = {m[0], m[1], 1.0 + m[2]};
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t j = (k + 1) % 3;
      s.gyr[k] = kGyroPerG * rate_gain * (m[j] - prev[j]);
      s.mag[k] = kEarthField[k] + kMagPerG * m[(k + 2) % 3];
    }
    if (sig > 0.0) {
      for (auto& v : s.acc) v += sig * noise(rng);
      for (auto& v : s.gyr) v += kGyroPerG * sig * noise(rng);
      for (auto& v : s.mag) v += kMagPerG * sig * noise(rng);
    }
    out.push_back(s);
  }
  return out;
}

struct DatasetSpec {
  double per_class_ms = 300000.0;  // 150 windows per class
  double fs = kDefaultSampleRateHz;
  double noise_sigma = kDefaultNoiseSigmaG;
  double amplitude = kDefaultAmplitudeG;
  double freq = kDefaultGestureFreqHz;
  double jitter = 0.20;  // relative amplitude and frequency spread per window
  std::uint64_t seed = 7;
};

/// A labelled recording: one continuous stream per class, plus its windows.
struct LabelledStream {
  std::vector<ImuSample> samples;
  std::vector<GestureClass> labels;  // one per sample
};

inline std::size_t windows_per_class(const DatasetSpec& spec) {
  return static_cast<std::size_t>(std::floor(spec.per_class_ms / kDefaultWindowMs + 1e-9));
}

/// Continuous labelled stream, classes back to back in index order. Every
/// 2000 ms chunk carries its own jittered amplitude, frequency and phase.
inline LabelledStream build_stream(const DatasetSpec& spec) {
  if (!(spec.fs > 0.0)) throw GenerationError("fs must be positive");
  const std::size_t per_class = windows_per_class(spec);
  if (per_class < 2)
    throw GenerationError("per-class duration " + std::to_string(spec.per_class_ms) +
                          " ms is too short: need at least 2 windows (4000 ms)");
  if (!(spec.jitter >= 0.0 && spec.jitter < 1.0)) throw GenerationError("jitter must lie in [0, 1)");

  LabelledStream ds;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double period_ms = 1000.0 / spec.fs;
  double t_ms = 0.0;
  for (auto g : kAllGestures) {
    for (std::size_t w = 0; w < per_class; ++w) {
      SynthSpec s;
      s.gesture = g;
      s.duration_ms = kDefaultWindowMs;
      s.fs = spec.fs;
      s.amplitude = spec.amplitude * (1.0 + spec.jitter * unit(rng));
      s.freq = spec.freq * (1.0 + spec.jitter * unit(rng));
      s.phase = phase(rng);
      s.noise_sigma = spec.noise_sigma;
      s.seed = rng();
      s.t0_ms = t_ms;
      auto chunk = synth_gesture(s);
      t_ms += static_cast<double>(chunk.size()) * period_ms;
      ds.labels.insert(ds.labels.end(), chunk.size(), g);
      ds.samples.insert(ds.samples.end(), chunk.begin(), chunk.end());
    }
  }
  return ds;
}

/// Splits a labelled stream into contiguous same-label runs and windows
/// each run with the given hop.
inline std::vector<ImuWindow> windows_from_stream(const LabelledStream& ds, double fs = kDefaultSampleRateHz,
                                                  double hop_ms = kDefaultWindowMs) {
  std::vector<ImuWindow> out;
  std::size_t start = 0;
  while (start < ds.samples.size()) {
    std::size_t end = start;
    while (end < ds.samples.size() && ds.labels[end] == ds.labels[start]) ++end;
    std::span<const ImuSample> run(ds.samples.data() + start, end - start);
    auto w = window_stream(run, fs, kDefaultWindowMs, hop_ms, ds.labels[start]);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    start = end;
  }
  return out;
}

/// Labelled, non-overlapping 200-sample windows, balanced across classes.
inline std::vector<ImuWindow> build_dataset(const DatasetSpec& spec) {
  return windows_from_stream(build_stream(spec), spec.fs, kDefaultWindowMs);
}

inline constexpr const char* kDatasetHeader = "t_ms,accX,accY,accZ,gyrX,gyrY,gyrZ,magX,magY,magZ,label";

inline void write_dataset_csv(std::ostream& os, const LabelledStream& ds) {
  os << kDatasetHeader << '\n';
  os << std::fixed;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    os << std::setprecision(2) << s.t_ms << std::setprecision(6);
    for (std::size_t a = 0; a < kNumAxes; ++a) os << ',' << s.axis(a);
    os << ',' << to_string(ds.labels[i]) << '\n';
  }
}

inline LabelledStream read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DatasetFormatError("dataset is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kDatasetHeader)
    throw DatasetFormatError("dataset header mismatch: expected '" + std::string(kDatasetHeader) + "'");
  LabelledStream ds;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 11)
      throw DatasetFormatError("line " + std::to_string(line_no) + ": expected 11 fields, got " +
                               std::to_string(cells.size()));
    ImuSample s;
    double vals[10];
    for (std::size_t k = 0; k < 10; ++k) {
      std::size_t used = 0;
      try {
        vals[k] = std::stod(cells[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[k].size() || cells[k].empty())
        throw DatasetFormatError("line " + std::to_string(line_no) + ": bad number in field " +
                                 std::to_string(k + 1));
    }
    s.t_ms = vals[0];
    for (std::size_t k = 0; k < 3; ++k) {
      s.acc[k] = vals[1 + k];
      s.gyr[k] = vals[4 + k];
      s.mag[k] = vals[7 + k];
    }
    const auto g = gesture_from_string(cells[10]);
    if (!g) throw DatasetFormatError("line " + std::to_string(line_no) + ": unknown label '" + cells[10] + "'");
    if (!ds.samples.empty() && !(s.t_ms > ds.samples.back().t_ms))
      throw DatasetFormatError("line " + std::to_string(line_no) + ": timestamps must increase");
    ds.samples.push_back(s);
    ds.labels.push_back(*g);
  }
  return ds;
}

inline void save_dataset_csv(const std::string& path, const LabelledStream& ds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_dataset_csv(out, ds);
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline LabelledStream load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_dataset_csv(in);
}

}  // namespace duohand
