#pragma once

// Newline-delimited serial line protocol and the replay file format.
//
//   L,<ax>,<ay>,<az>,<f1>,<f2>        left glove: acc in g, flex raw 0..1023
//   R,<label>,<confidence>            right glove, classified on-device
//   I,<ax>,<ay>,<az>,<gx>,<gy>,<gz>,<mx>,<my>,<mz>
//                                     right glove, raw 9-axis sample
//
// Reals carry at most three decimals on the wire. A replay file holds one
// `<ms> <line>` entry per line, with ms relative to the start of the file.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "duohand/gesture.hpp"
#include "duohand/signal.hpp"

namespace duohand {

struct ParseError : std::runtime_error {
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error("parse error at offset " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct RangeError : std::runtime_error {
  RangeError(std::string field, const std::string& what)
      : std::runtime_error("field '" + field + "' out of range: " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct LeftLine {
  Vec3 acc{};
  int flex_index = 0;
  int flex_middle = 0;
  bool operator==(const LeftLine&) const = default;
};

struct RightLine {
  GestureClass label = GestureClass::idle;
  double confidence = 0.0;
  bool operator==(const RightLine&) const = default;
};

struct ImuLine {
  Vec3 acc{};
  Vec3 gyr{};
  Vec3 mag{};
  bool operator==(const ImuLine&) const = default;
};

using WireLine = std::variant<LeftLine, RightLine, ImuLine>;

inline constexpr double kAccRangeG = 16.0;
inline constexpr double kGyrRangeDps = 2000.0;
inline constexpr double kMagRangeUt = 5000.0;
inline constexpr int kFlexMax = 1023;

namespace detail {

class FieldCursor {
 public:
  explicit FieldCursor(std::string_view s) : s_(s) {}

  /// Next comma-separated field; records its starting offset.
  std::string_view next(const char* name) {
    if (done_) throw ParseError(pos_, std::string("missing field '") + name + "'");
    start_ = pos_;
    const auto comma = s_.find(',', pos_);
    std::string_view f;
    if (comma == std::string_view::npos) {
      f = s_.substr(pos_);
      pos_ = s_.size();
      done_ = true;
    } else {
      f = s_.substr(pos_, comma - pos_);
      pos_ = comma + 1;
    }
    return f;
  }

  void expect_end() const {
    if (!done_) throw ParseError(pos_ == 0 ? 0 : pos_ - 1, "unexpected extra field");
  }

  std::size_t field_offset() const { return start_; }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t start_ = 0;
  bool done_ = false;
};

/// [-]digits[.digits], no exponent, no sign on zero-length integer part.
inline double parse_real(std::string_view f, std::size_t offset, const char* name) {
  std::size_t i = 0;
  if (i < f.size() && f[i] == '-') ++i;
  const std::size_t int_start = i;
  while (i < f.size() && f[i] >= '0' && f[i] <= '9') ++i;
  if (i == int_start) throw ParseError(offset + i, std::string("expected digits in '") + name + "'");
  if (i < f.size() && f[i] == '.') {
    ++i;
    const std::size_t frac_start = i;
    while (i < f.size() && f[i] >= '0' && f[i] <= '9') ++i;
    if (i == frac_start) throw ParseError(offset + i, std::string("expected decimals in '") + name + "'");
  }
  if (i != f.size()) throw ParseError(offset + i, std::string("unexpected character in '") + name + "'");
  double v = 0.0;
  const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
  if (res.ec != std::errc{}) throw ParseError(offset, std::string("unreadable number in '") + name + "'");
  return v;
}

inline int parse_int(std::string_view f, std::size_t offset, const char* name) {
  if (f.empty()) throw ParseError(offset, std::string("expected integer in '") + name + "'");
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f[i] < '0' || f[i] > '9') throw ParseError(offset + i, std::string("expected integer in '") + name + "'");
  if (f.size() > 6) throw RangeError(name, "too many digits");
  int v = 0;
  std::from_chars(f.data(), f.data() + f.size(), v);
  return v;
}

inline double real_field(FieldCursor& c, const char* name, double limit) {
  const auto f = c.next(name);
  const double v = parse_real(f, c.field_offset(), name);
  if (std::abs(v) > limit) throw RangeError(name, std::string(f) + " exceeds +-" + std::to_string(limit));
  return v;
}

inline std::string fmt3(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace detail

/// Strict parse of one protocol line. Trailing whitespace is ignored.
inline WireLine parse_line(std::string_view raw) {
  while (!raw.empty() && (raw.back() == ' ' || raw.back() == '\t' || raw.back() == '\r' || raw.back() == '\n'))
    raw.remove_suffix(1);
  if (raw.empty()) throw ParseError(0, "empty line");
  detail::FieldCursor c(raw);
  const auto tag = c.next("tag");
  if (tag == "L") {
    LeftLine l;
    static constexpr const char* names[3] = {"ax", "ay", "az"};
    for (std::size_t i = 0; i < 3; ++i) l.acc[i] = detail::real_field(c, names[i], kAccRangeG);
    auto flex = [&](const char* name) {
      const auto f = c.next(name);
      const int v = detail::parse_int(f, c.field_offset(), name);
      if (v > kFlexMax) throw RangeError(name, std::to_string(v) + " exceeds 1023");
      return v;
    };
    l.flex_index = flex("f1");
    l.flex_middle = flex("f2");
    c.expect_end();
    return l;
  }
  if (tag == "R") {
    RightLine r;
    const auto label = c.next("label");
    const auto g = gesture_from_string(label);
    if (!g) throw RangeError("label", "unknown label '" + std::string(label) + "'");
    r.label = *g;
    const auto f = c.next("confidence");
    r.confidence = detail::parse_real(f, c.field_offset(), "confidence");
    if (r.confidence < 0.0 || r.confidence > 1.0) throw RangeError("confidence", std::string(f) + " not in [0, 1]");
    c.expect_end();
    return r;
  }
  if (tag == "I") {
    ImuLine m;
    static constexpr const char* names[9] = {"ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"};
    for (std::size_t i = 0; i < 3; ++i) m.acc[i] = detail::real_field(c, names[i], kAccRangeG);
    for (std::size_t i = 0; i < 3; ++i) m.gyr[i] = detail::real_field(c, names[3 + i], kGyrRangeDps);
    for (std::size_t i = 0; i < 3; ++i) m.mag[i] = detail::real_field(c, names[6 + i], kMagRangeUt);
    c.expect_end();
    return m;
  }
  throw ParseError(0, "unknown record tag '" + std::string(tag) + "'");
}

inline std::string format_line(const LeftLine& l) {
  return "L," + detail::fmt3(l.acc[0]) + "," + detail::fmt3(l.acc[1]) + "," + detail::fmt3(l.acc[2]) + "," +
         std::to_string(l.flex_index) + "," + std::to_string(l.flex_middle);
}

inline std::string format_line(const RightLine& r) {
  return "R," + std::string(to_string(r.label)) + "," + detail::fmt3(r.confidence);
}

inline std::string format_line(const ImuLine& m) {
  std::string s = "I";
  for (const auto* v : {&m.acc, &m.gyr, &m.mag})
    for (double x : *v) s += "," + detail::fmt3(x);
  return s;
}

inline std::string format_line(const WireLine& w) {
  return std::visit([](const auto& l) { return format_line(l); }, w);
}

inline ImuLine to_imu_line(const ImuSample& s) { return {s.acc, s.gyr, s.mag}; }

struct ReplayEntry {
  double t_ms = 0.0;
  WireLine line;
};

struct ReplayError : std::runtime_error {
  ReplayError(std::size_t line_no, const std::string& what)
      : std::runtime_error("replay line " + std::to_string(line_no) + ": " + what), line_(line_no) {}
  std::size_t line_no() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads `<ms> <line>` entries. Blank lines and '#' comments are skipped;
/// timestamps must not decrease.
inline std::vector<ReplayEntry> read_replay(std::istream& is) {
  std::vector<ReplayEntry> out;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(is, text)) {
    ++line_no;
    std::string_view sv(text);
    while (!sv.empty() && (sv.back() == '\r' || sv.back() == ' ' || sv.back() == '\t')) sv.remove_suffix(1);
    if (sv.empty() || sv.front() == '#') continue;
    const auto space = sv.find(' ');
    if (space == std::string_view::npos) throw ReplayError(line_no, "expected '<ms> <line>'");
    double t = 0.0;
    try {
      t = detail::parse_real(sv.substr(0, space), 0, "ms");
    } catch (const std::exception& e) {
      throw ReplayError(line_no, e.what());
    }
    if (t < 0.0) throw ReplayError(line_no, "negative timestamp");
    if (!out.empty() && t < out.back().t_ms) throw ReplayError(line_no, "timestamps must not decrease");
    try {
      out.push_back({t, parse_line(sv.substr(space + 1))});
    } catch (const std::exception& e) {
      throw ReplayError(line_no, e.what());
    }
  }
  return out;
}

inline void write_replay(std::ostream& os, const std::vector<ReplayEntry>& entries) {
  for (const auto& e : entries) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", e.t_ms);
    os << buf << ' ' << format_line(e.line) << '\n';
  }
}

}  // namespace duohand
