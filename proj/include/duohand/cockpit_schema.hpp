#pragma once

// JSON envelope spoken on the cockpit broadcast/control channel:
//   {"type": "<kind>", "payload": {...}}
// Outbound kinds: pose, joints, caps, gesture, latency, error.
// Inbound kinds:  ctl_tilt, ctl_flex, ctl_gesture.
// Field-level schema: docs/cockpit-protocol.md.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "duohand/service.hpp"

namespace duohand {

using nlohmann::json;

inline std::string_view to_string(DispatchStatus s) {
  switch (s) {
    case DispatchStatus::planned: return "planned";
    case DispatchStatus::preempt: return "preempt";
    case DispatchStatus::ignored: return "ignored";
    case DispatchStatus::busy: return "busy";
  }
  return "ignored";
}

inline json envelope(std::string_view type, json payload) {
  return json{{"type", type}, {"payload", std::move(payload)}};
}

/// Envelope for one bus message.
inline json to_json(const BusMessage& m) {
  return std::visit(
      [&](const auto& p) -> json {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, PoseUpdate>) {
          return envelope("pose", {{"t_ms", m.t_ms},
                                   {"x", p.pose.x},
                                   {"y", p.pose.y},
                                   {"heading", p.pose.heading},
                                   {"v", p.applied.linear_x},
                                   {"w", p.applied.angular_z}});
        } else if constexpr (std::is_same_v<P, ArmSnapshot>) {
          return envelope("joints", {{"t_ms", m.t_ms},
                                     {"q", p.row.q},
                                     {"segment", p.row.segment ? json(to_string(*p.row.segment)) : json(nullptr)},
                                     {"busy", p.busy}});
        } else if constexpr (std::is_same_v<P, SpeedCaps>) {
          return envelope("caps", {{"t_ms", m.t_ms}, {"v_max", p.v_max}, {"w_max", p.w_max}});
        } else if constexpr (std::is_same_v<P, GestureEvent>) {
          json plan = json::array();
          for (auto s : p.plan) plan.push_back(to_string(s));
          return envelope("gesture", {{"t_ms", m.t_ms},
                                      {"id", p.id},
                                      {"label", to_string(p.label)},
                                      {"confidence", p.confidence},
                                      {"status", to_string(p.status)},
                                      {"plan", plan}});
        } else if constexpr (std::is_same_v<P, LatencyRecord>) {
          return envelope("latency", {{"t_ms", m.t_ms},
                                      {"id", p.event_id},
                                      {"classify_ms", p.classify_ms},
                                      {"dispatch_ms", p.dispatch_ms},
                                      {"total_ms", p.total_ms}});
        } else {
          return envelope("twist", {{"t_ms", m.t_ms}, {"v", p.twist.linear_x}, {"w", p.twist.angular_z}});
        }
      },
      m.payload);
}

/// Parses an inbound control envelope. Throws ProtocolError.
inline ControlMessage parse_control(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("control message is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw ProtocolError("control message needs a string 'type'");
  const auto type = j["type"].get<std::string>();
  const json payload = j.value("payload", json::object());
  if (!payload.is_object()) throw ProtocolError("payload must be an object");
  auto number = [&](const char* key) {
    if (!payload.contains(key) || !payload[key].is_number()) throw ProtocolError(type + ": '" + key + "' must be a number");
    return payload[key].get<double>();
  };
  auto text_field = [&](const char* key) {
    if (!payload.contains(key) || !payload[key].is_string()) throw ProtocolError(type + ": '" + key + "' must be a string");
    return payload[key].get<std::string>();
  };
  if (type == "ctl_tilt") {
    CtlTilt t{{number("theta"), number("phi")}};
    if (std::abs(t.tilt.theta) > 90.0 || std::abs(t.tilt.phi) > 90.0) throw ProtocolError("ctl_tilt: angle beyond 90 deg");
    return t;
  }
  if (type == "ctl_flex") {
    const auto f = text_field("finger");
    if (f == "index") return CtlFlex{Finger::index};
    if (f == "middle") return CtlFlex{Finger::middle};
    throw ProtocolError("ctl_flex: finger must be 'index' or 'middle'");
  }
  if (type == "ctl_gesture") {
    const auto label = text_field("label");
    const auto g = gesture_from_string(label);
    if (!g) throw ProtocolError("ctl_gesture: unknown label '" + label + "'");
    CtlGesture c;
    c.label = *g;
    const auto mode = payload.value("mode", std::string("select"));
    if (mode == "select")
      c.mode = GestureInputMode::select;
    else if (mode == "draw")
      c.mode = GestureInputMode::draw;
    else
      throw ProtocolError("ctl_gesture: mode must be 'select' or 'draw'");
    if (payload.contains("confidence")) {
      c.confidence = number("confidence");
      if (c.confidence < 0.0 || c.confidence > 1.0) throw ProtocolError("ctl_gesture: confidence not in [0, 1]");
    }
    return c;
  }
  throw ProtocolError("unknown control type '" + type + "'");
}

inline std::string control_to_text(const ControlMessage& c) {
  return std::visit(
      [](const auto& m) -> std::string {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, CtlTilt>)
          return envelope("ctl_tilt", {{"theta", m.tilt.theta}, {"phi", m.tilt.phi}}).dump();
        else if constexpr (std::is_same_v<M, CtlFlex>)
          return envelope("ctl_flex", {{"finger", m.finger == Finger::index ? "index" : "middle"}}).dump();
        else
          return envelope("ctl_gesture", {{"label", to_string(m.label)},
                                          {"mode", m.mode == GestureInputMode::draw ? "draw" : "select"},
                                          {"confidence", m.confidence}})
              .dump();
      },
      c);
}

/// Rate-limits high-frequency streams (pose, joints) to `rate_hz`; caps,
/// gesture and latency messages pass straight through; raw twist ticks are
/// not broadcast.
class BroadcastDecimator {
 public:
  explicit BroadcastDecimator(double rate_hz = 20.0) : period_ms_(1000.0 / rate_hz) {}

  std::optional<std::string> feed(const BusMessage& m) {
    if (std::holds_alternative<TwistCommand>(m.payload)) return std::nullopt;
    const bool periodic = std::holds_alternative<PoseUpdate>(m.payload) || std::holds_alternative<ArmSnapshot>(m.payload);
    if (periodic) {
      auto& last = last_sent_[m.payload.index()];
      if (last && m.t_ms - *last < period_ms_ - 1e-9) return std::nullopt;
      last = m.t_ms;
    }
    return to_json(m).dump();
  }

 private:
  double period_ms_;
  std::map<std::size_t, std::optional<double>> last_sent_;
};

}  // namespace duohand
