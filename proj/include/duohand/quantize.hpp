#pragma once

// Post-training int8 quantization: symmetric per-tensor weights, asymmetric
// per-tensor activations calibrated from min/max, int32 accumulation with a
// fixed-point requantization multiplier.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "duohand/nn.hpp"

namespace duohand {

struct QuantizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;

  std::int8_t quantize(double x) const {
    const double q = std::nearbyint(x / scale) + zero_point;
    return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
  }
  double dequantize(std::int32_t q) const { return scale * static_cast<double>(q - zero_point); }

  bool operator==(const QuantParams&) const = default;
};

/// Real multiplier m > 0 expressed as mantissa * 2^-shift with the mantissa
/// in [2^30, 2^31).
struct FixedMultiplier {
  std::int32_t mantissa = 0;
  int shift = 0;

  static FixedMultiplier from_real(double m) {
    FixedMultiplier f;
    if (!(m > 0.0)) return f;
    int exp = 0;
    const double frac = std::frexp(m, &exp);  // m = frac * 2^exp, frac in [0.5, 1)
    auto q = static_cast<std::int64_t>(std::llround(frac * static_cast<double>(1LL << 31)));
    if (q == (1LL << 31)) {
      q /= 2;
      ++exp;
    }
    f.mantissa = static_cast<std::int32_t>(q);
    f.shift = 31 - exp;
    return f;
  }

  /// round(acc * m), half away from zero.
  std::int32_t apply(std::int32_t acc) const {
    if (mantissa == 0) return 0;
    if (shift <= 0) return static_cast<std::int32_t>(static_cast<std::int64_t>(acc) * mantissa << (-shift));
    if (shift > 62) return 0;
    const std::int64_t prod = static_cast<std::int64_t>(acc) * mantissa;
    const std::int64_t half = std::int64_t{1} << (shift - 1);
    const std::int64_t mag = ((prod < 0 ? -prod : prod) + half) >> shift;
    return static_cast<std::int32_t>(prod < 0 ? -mag : mag);
  }

  bool operator==(const FixedMultiplier&) const = default;
};

struct QuantLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<std::int8_t> w;   // row-major (out x in), zero point 0
  std::vector<std::int32_t> b;  // scale = input scale * weight scale
  double weight_scale = 1.0;
  QuantParams output;
  FixedMultiplier multiplier;
  bool relu = false;

  bool operator==(const QuantLayer&) const = default;
};

struct QuantModel {
  InputNorm<float> norm;
  QuantParams input;
  std::vector<QuantLayer> layers;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t num_classes() const { return layers.back().out; }

  bool operator==(const QuantModel& o) const {
    return norm.mean == o.norm.mean && norm.inv_std == o.norm.inv_std && input == o.input &&
           layers == o.layers;
  }
};

/// Symmetric scale for a weight tensor: max|w| / 127.
inline double symmetric_scale(std::span<const float> w) {
  double mx = 0.0;
  for (float v : w) mx = std::max(mx, std::abs(static_cast<double>(v)));
  return mx > 0.0 ? mx / 127.0 : 1.0;
}

/// Asymmetric int8 parameters covering [lo, hi] widened to include 0.
inline QuantParams asymmetric_params(double lo, double hi) {
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  QuantParams q;
  q.scale = (hi - lo) > 1e-12 ? (hi - lo) / 255.0 : 1.0 / 255.0;
  const double zp = -128.0 - lo / q.scale;
  q.zero_point = static_cast<std::int32_t>(std::clamp(std::nearbyint(zp), -128.0, 127.0));
  return q;
}

inline std::vector<double> dequantize_weights(const QuantLayer& layer) {
  std::vector<double> out(layer.w.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = layer.weight_scale * layer.w[i];
  return out;
}

/// Weight and bias bytes of the float model.
inline std::size_t payload_bytes(const TinyModel& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers) n += (l.w.size() + l.b.size()) * sizeof(float);
  return n;
}

inline std::size_t payload_bytes(const QuantModel& m) {
  std::size_t n = 0;
  for (const auto& l : m.layers) n += l.w.size() * sizeof(std::int8_t) + l.b.size() * sizeof(std::int32_t);
  return n;
}

/// Calibrates activation ranges by running the float model over `calib`.
inline QuantModel quantize_int8(const TinyModel& model, std::span<const std::vector<double>> calib) {
  if (calib.empty()) throw QuantizationError("calibration set is empty");
  if (model.layers.empty()) throw QuantizationError("model has no layers");
  const std::size_t L = model.layers.size();
  std::vector<double> lo(L + 1, 0.0), hi(L + 1, 0.0);
  for (const auto& x : calib) {
    detail::check_input(model, x.size());
    const auto tr = detail::forward_trace(model, x);
    for (std::size_t l = 0; l <= L; ++l) {
      for (float v : tr.a[l]) {
        lo[l] = std::min(lo[l], static_cast<double>(v));
        hi[l] = std::max(hi[l], static_cast<double>(v));
      }
    }
  }

  QuantModel q;
  q.norm = model.norm;
  q.input = asymmetric_params(lo[0], hi[0]);
  double in_scale = q.input.scale;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& src = model.layers[l];
    QuantLayer dst;
    dst.in = src.in;
    dst.out = src.out;
    dst.relu = l + 1 < L;
    dst.weight_scale = symmetric_scale(src.w);
    dst.w.resize(src.w.size());
    for (std::size_t i = 0; i < src.w.size(); ++i) {
      const double qv = std::nearbyint(static_cast<double>(src.w[i]) / dst.weight_scale);
      dst.w[i] = static_cast<std::int8_t>(std::clamp(qv, -127.0, 127.0));
    }
    const double bias_scale = in_scale * dst.weight_scale;
    dst.b.resize(src.b.size());
    for (std::size_t i = 0; i < src.b.size(); ++i) {
      const double qv = std::nearbyint(static_cast<double>(src.b[i]) / bias_scale);
      dst.b[i] = static_cast<std::int32_t>(std::clamp(qv, -2147483647.0, 2147483647.0));
    }
    dst.output = asymmetric_params(lo[l + 1], hi[l + 1]);
    dst.multiplier = FixedMultiplier::from_real(bias_scale / dst.output.scale);
    in_scale = dst.output.scale;
    q.layers.push_back(std::move(dst));
  }
  return q;
}

/// Dequantized output-layer values of the integer path.
inline std::vector<double> logits_int8(const QuantModel& q, std::span<const double> x) {
  if (q.layers.empty()) throw std::invalid_argument("quantized model has no layers");
  if (x.size() != q.input_dim())
    throw std::invalid_argument("input has " + std::to_string(x.size()) + " features, model expects " +
                                std::to_string(q.input_dim()));
  std::vector<std::int8_t> act(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x[i];
    if (!q.norm.empty()) v = (static_cast<float>(v) - q.norm.mean[i]) * q.norm.inv_std[i];
    act[i] = q.input.quantize(v);
  }
  std::int32_t in_zp = q.input.zero_point;
  for (const auto& layer : q.layers) {
    std::vector<std::int8_t> next(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      std::int32_t acc = layer.b[o];
      const std::int8_t* row = &layer.w[o * layer.in];
      for (std::size_t i = 0; i < layer.in; ++i)
        acc += (static_cast<std::int32_t>(act[i]) - in_zp) * static_cast<std::int32_t>(row[i]);
      std::int32_t v = layer.multiplier.apply(acc) + layer.output.zero_point;
      v = std::clamp(v, -128, 127);
      if (layer.relu) v = std::max(v, layer.output.zero_point);
      next[o] = static_cast<std::int8_t>(v);
    }
    act = std::move(next);
    in_zp = layer.output.zero_point;
  }
  const auto& last = q.layers.back().output;
  std::vector<double> out(act.size());
  for (std::size_t i = 0; i < act.size(); ++i) out[i] = last.dequantize(act[i]);
  return out;
}

inline std::vector<double> forward_int8(const QuantModel& q, std::span<const double> x) {
  return softmax(logits_int8(q, x));
}

inline std::vector<double> forward_int8(const QuantModel& q, const FeatureVector& x) {
  return forward_int8(q, std::span<const double>(x));
}

inline ConfusionMatrix evaluate(const QuantModel& q, const Dataset& data) {
  return evaluate_with([&](std::span<const double> x) { return forward_int8(q, x); }, data,
                       q.num_classes());
}

}  // namespace duohand
