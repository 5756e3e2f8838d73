#pragma once

// 16-point FFT, Welch-averaged PSD, per-axis moments and the 117-wide
// hybrid feature vector.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "duohand/signal.hpp"

namespace duohand {

inline constexpr std::size_t kFftSize = 16;
inline constexpr std::size_t kPsdBins = kFftSize / 2;
inline constexpr std::size_t kStatsPerAxis = 5;
inline constexpr std::size_t kFeaturesPerAxis = kPsdBins + kStatsPerAxis;
inline constexpr std::size_t kFeatureDim = kNumAxes * kFeaturesPerAxis;
inline constexpr double kLogFloor = 1e-12;

static_assert(kFeatureDim == 117);

struct Spectrum16 {
  std::array<std::complex<double>, kFftSize> bins{};
  double fs = kDefaultSampleRateHz;
};

struct PsdBins {
  std::array<double, kPsdBins> p{};
  double delta_f = 0.0;
};

struct AxisStats {
  double mean = 0.0;
  double rms = 0.0;
  double variance = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;  // excess
};

using FeatureVector = std::array<double, kFeatureDim>;

/// Bin spacing of the 16-point transform.
constexpr double frequency_resolution(double fs) { return fs / static_cast<double>(kFftSize); }

/// Highest one-sided bin centre, (N/2 - 1) * delta_f.
constexpr double max_frequency(double fs) {
  return static_cast<double>(kPsdBins - 1) * frequency_resolution(fs);
}

namespace detail {

constexpr std::size_t bit_reverse4(std::size_t i) {
  return ((i & 1u) << 3) | ((i & 2u) << 1) | ((i & 4u) >> 1) | ((i & 8u) >> 3);
}

inline const std::array<std::complex<double>, kFftSize / 2>& twiddles16() {
  static const auto table = [] {
    std::array<std::complex<double>, kFftSize / 2> t{};
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / kFftSize;
      t[k] = {std::cos(ang), std::sin(ang)};
    }
    return t;
  }();
  return table;
}

}  // namespace detail

/// Iterative radix-2 decimation-in-time transform of exactly 16 samples.
inline Spectrum16 fft16(std::span<const double> frame, double fs = kDefaultSampleRateHz) {
  if (frame.size() != kFftSize)
    throw std::invalid_argument("fft16: frame must hold 16 samples, got " + std::to_string(frame.size()));
  Spectrum16 out;
  out.fs = fs;
  auto& x = out.bins;
  for (std::size_t i = 0; i < kFftSize; ++i) {
    if (!std::isfinite(frame[i])) throw std::invalid_argument("fft16: non-finite sample");
    x[detail::bit_reverse4(i)] = {frame[i], 0.0};
  }
  const auto& tw = detail::twiddles16();
  for (std::size_t len = 2; len <= kFftSize; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = kFftSize / len;
    for (std::size_t base = 0; base < kFftSize; base += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const auto t = tw[j * stride] * x[base + j + half];
        const auto u = x[base + j];
        x[base + j] = u + t;
        x[base + j + half] = u - t;
      }
    }
  }
  return out;
}

/// Mean of |X[k]|^2 / 16 over consecutive disjoint 16-sample frames, k = 0..7.
/// Samples past the last whole frame are ignored.
inline PsdBins psd_welch(std::span<const double> axis, double fs = kDefaultSampleRateHz) {
  if (axis.size() < kFftSize)
    throw std::invalid_argument("psd_welch: need at least 16 samples, got " + std::to_string(axis.size()));
  const std::size_t frames = axis.size() / kFftSize;
  PsdBins out;
  out.delta_f = frequency_resolution(fs);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto spec = fft16(axis.subspan(f * kFftSize, kFftSize), fs);
    for (std::size_t k = 0; k < kPsdBins; ++k) out.p[k] += std::norm(spec.bins[k]) / kFftSize;
  }
  for (auto& v : out.p) v /= static_cast<double>(frames);
  return out;
}

/// Population moments. Zero-variance input reports skewness = kurtosis = 0.
inline AxisStats axis_stats(std::span<const double> axis) {
  AxisStats s;
  if (axis.empty()) return s;
  const auto n = static_cast<double>(axis.size());
  double sum = 0.0, sum_sq = 0.0;
  for (double v : axis) {
    sum += v;
    sum_sq += v * v;
  }
  s.mean = sum / n;
  s.rms = std::sqrt(sum_sq / n);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : axis) {
    const double d = v - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.variance = m2;
  // Relative threshold: a constant series can leave rounding residue in m2.
  if (m2 > 1e-24 * std::max(1.0, s.mean * s.mean)) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2) - 3.0;
  } else {
    s.variance = 0.0;
  }
  return s;
}

/// Pre-transform conditioning. Both factors are 1, so this is the identity;
/// it is kept as an explicit stage so the pipeline matches the recorded one.
struct Conditioning {
  double scale = 1.0;
  std::size_t decimation = 1;
};

/// 117 features, axis-major; per axis 8 log10 PSD bins then mean, rms,
/// variance, skewness, excess kurtosis.
inline FeatureVector extract_features(const ImuWindow& window, Conditioning cond = {}) {
  validate_window(window, samples_per_window(window.fs, kDefaultWindowMs));
  if (cond.decimation == 0) throw WindowError("extract_features: decimation must be >= 1");
  FeatureVector fv{};
  std::vector<double> series;
  for (std::size_t a = 0; a < kNumAxes; ++a) {
    series.clear();
    for (std::size_t i = 0; i < window.samples.size(); i += cond.decimation)
      series.push_back(cond.scale * window.samples[i].axis(a));
    const double fs = window.fs / static_cast<double>(cond.decimation);
    const auto psd = psd_welch(series, fs);
    const auto st = axis_stats(series);
    auto* dst = fv.data() + a * kFeaturesPerAxis;
    for (std::size_t k = 0; k < kPsdBins; ++k) dst[k] = std::log10(psd.p[k] + kLogFloor);
    dst[kPsdBins + 0] = st.mean;
    dst[kPsdBins + 1] = st.rms;
    dst[kPsdBins + 2] = st.variance;
    dst[kPsdBins + 3] = st.skewness;
    dst[kPsdBins + 4] = st.kurtosis;
  }
  return fv;
}

}  // namespace duohand
