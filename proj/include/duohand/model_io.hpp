#pragma once

// Versioned binary model file ("TNN1"), little-endian throughout.
//
//   magic      4 bytes  "TNN1"
//   version    u8       1
//   quantized  u8       0 = float32, 1 = int8
//   n_layers   u8
//   dims       u32 * (n_layers + 1)
//   has_norm   u8, then input_dim f32 means and input_dim f32 inverse std devs
//   payload    float32: per layer weights then biases (f32)
//              int8:    input scale f64, zero point i32; per layer weight scale
//                       f64, output scale f64, output zero point i32,
//                       multiplier i32, shift i32, relu u8, weights i8, biases i32

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "duohand/nn.hpp"
#include "duohand/quantize.hpp"

namespace duohand {

struct LoadError : std::runtime_error {
  LoadError(std::string field, const std::string& what)
      : std::runtime_error("model load failed at '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

inline constexpr std::uint8_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[4] = {'T', 'N', 'N', '1'};

namespace detail {

class ByteWriter {
 public:
  template <class U>
  void put(U v) {
    if constexpr (std::is_floating_point_v<U>) {
      using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
      put_le(std::bit_cast<Bits>(v));
    } else {
      put_le(static_cast<std::make_unsigned_t<U>>(v));
    }
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  template <class U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

  template <class U>
  U get(const char* field) {
    if constexpr (std::is_floating_point_v<U>) {
      using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
      return std::bit_cast<U>(get_le<Bits>(field));
    } else {
      return static_cast<U>(get_le<std::make_unsigned_t<U>>(field));
    }
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  template <class U>
  U get_le(const char* field) {
    if (remaining() < sizeof(U)) throw LoadError(field, "file truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(U(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline void write_header(ByteWriter& w, bool quantized, const std::vector<std::size_t>& dims,
                         const InputNorm<float>& norm) {
  w.raw(kModelMagic, 4);
  w.put<std::uint8_t>(kModelFormatVersion);
  w.put<std::uint8_t>(quantized ? 1 : 0);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(dims.size() - 1));
  for (auto d : dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.put<std::uint8_t>(norm.empty() ? 0 : 1);
  for (float v : norm.mean) w.put(v);
  for (float v : norm.inv_std) w.put(v);
}

struct Header {
  bool quantized = false;
  std::vector<std::size_t> dims;
  InputNorm<float> norm;
};

inline Header read_header(ByteReader& r) {
  char magic[4];
  for (auto& c : magic) c = static_cast<char>(r.get<std::uint8_t>("magic"));
  if (std::memcmp(magic, kModelMagic, 4) != 0) throw LoadError("magic", "not a TNN1 model file");
  const auto version = r.get<std::uint8_t>("version");
  if (version != kModelFormatVersion)
    throw LoadError("version", "unsupported version " + std::to_string(version));
  Header h;
  const auto qflag = r.get<std::uint8_t>("quantized");
  if (qflag > 1) throw LoadError("quantized", "flag must be 0 or 1");
  h.quantized = qflag == 1;
  const auto n_layers = r.get<std::uint8_t>("dims");
  if (n_layers == 0) throw LoadError("dims", "model has no layers");
  for (std::size_t i = 0; i <= n_layers; ++i) {
    const auto d = r.get<std::uint32_t>("dims");
    if (d == 0 || d > 65536) throw LoadError("dims", "layer width " + std::to_string(d) + " out of range");
    h.dims.push_back(d);
  }
  const auto has_norm = r.get<std::uint8_t>("norm");
  if (has_norm > 1) throw LoadError("norm", "flag must be 0 or 1");
  if (has_norm) {
    for (std::size_t i = 0; i < h.dims[0]; ++i) h.norm.mean.push_back(r.get<float>("norm"));
    for (std::size_t i = 0; i < h.dims[0]; ++i) h.norm.inv_std.push_back(r.get<float>("norm"));
  }
  return h;
}

inline void expect_end(const ByteReader& r) {
  if (r.remaining() != 0) throw LoadError("payload", std::to_string(r.remaining()) + " trailing bytes");
}

}  // namespace detail

inline std::vector<std::uint8_t> save_model(const TinyModel& m) {
  detail::ByteWriter w;
  detail::write_header(w, false, m.dims(), m.norm);
  for (const auto& l : m.layers) {
    for (float v : l.w) w.put(v);
    for (float v : l.b) w.put(v);
  }
  return w.take();
}

inline std::vector<std::uint8_t> save_model(const QuantModel& m) {
  detail::ByteWriter w;
  std::vector<std::size_t> dims{m.input_dim()};
  for (const auto& l : m.layers) dims.push_back(l.out);
  detail::write_header(w, true, dims, m.norm);
  w.put<double>(m.input.scale);
  w.put<std::int32_t>(m.input.zero_point);
  for (const auto& l : m.layers) {
    w.put<double>(l.weight_scale);
    w.put<double>(l.output.scale);
    w.put<std::int32_t>(l.output.zero_point);
    w.put<std::int32_t>(l.multiplier.mantissa);
    w.put<std::int32_t>(l.multiplier.shift);
    w.put<std::uint8_t>(l.relu ? 1 : 0);
    for (auto v : l.w) w.put<std::int8_t>(v);
    for (auto v : l.b) w.put<std::int32_t>(v);
  }
  return w.take();
}

using AnyModel = std::variant<TinyModel, QuantModel>;

inline AnyModel load_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto h = detail::read_header(r);
  if (!h.quantized) {
    auto m = TinyModel::zeros(h.dims);
    m.norm = std::move(h.norm);
    for (auto& l : m.layers) {
      for (auto& v : l.w) v = r.get<float>("weights");
      for (auto& v : l.b) v = r.get<float>("biases");
    }
    detail::expect_end(r);
    return m;
  }
  QuantModel q;
  q.norm = std::move(h.norm);
  q.input.scale = r.get<double>("input_scale");
  q.input.zero_point = r.get<std::int32_t>("input_zero_point");
  if (!(q.input.scale > 0.0)) throw LoadError("input_scale", "must be positive");
  for (std::size_t l = 0; l + 1 < h.dims.size(); ++l) {
    QuantLayer ql;
    ql.in = h.dims[l];
    ql.out = h.dims[l + 1];
    ql.weight_scale = r.get<double>("weight_scale");
    ql.output.scale = r.get<double>("output_scale");
    ql.output.zero_point = r.get<std::int32_t>("output_zero_point");
    ql.multiplier.mantissa = r.get<std::int32_t>("multiplier");
    ql.multiplier.shift = r.get<std::int32_t>("shift");
    const auto relu = r.get<std::uint8_t>("relu");
    if (relu > 1) throw LoadError("relu", "flag must be 0 or 1");
    ql.relu = relu == 1;
    if (!(ql.weight_scale > 0.0)) throw LoadError("weight_scale", "must be positive");
    if (!(ql.output.scale > 0.0)) throw LoadError("output_scale", "must be positive");
    ql.w.resize(ql.in * ql.out);
    for (auto& v : ql.w) {
      v = r.get<std::int8_t>("weights");
      if (v == -128) throw LoadError("weights", "int8 weight outside [-127, 127]");
    }
    ql.b.resize(ql.out);
    for (auto& v : ql.b) v = r.get<std::int32_t>("biases");
    q.layers.push_back(std::move(ql));
  }
  detail::expect_end(r);
  return q;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

/// Probabilities from whichever model variant was loaded.
inline std::vector<double> predict(const AnyModel& m, std::span<const double> x) {
  return std::visit(
      [&](const auto& model) -> std::vector<double> {
        if constexpr (std::is_same_v<std::decay_t<decltype(model)>, QuantModel>)
          return forward_int8(model, x);
        else
          return forward_f32(model, x);
      },
      m);
}

inline std::size_t model_input_dim(const AnyModel& m) {
  return std::visit([](const auto& model) { return model.input_dim(); }, m);
}

}  // namespace duohand
