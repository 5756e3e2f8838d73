#pragma once

// Event loop binding the left and right glove streams to the base
// controller, the classifier, both simulators and the broadcast bus.
//
// The left and right paths are independent: each owns its state and, in a
// live session, its own worker thread. They only meet on the Bus.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <variant>
#include <vector>

#include "duohand/arm.hpp"
#include "duohand/base_control.hpp"
#include "duohand/drive_sim.hpp"
#include "duohand/model_io.hpp"
#include "duohand/protocol.hpp"
#include "duohand/spectral.hpp"
#include "duohand/synth.hpp"

namespace duohand {

using SteadyClock = std::chrono::steady_clock;

inline double elapsed_ms(SteadyClock::time_point from, SteadyClock::time_point to = SteadyClock::now()) {
  return std::chrono::duration<double, std::milli>(to - from).count();
}

struct ReportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GestureEvent {
  std::uint64_t id = 0;
  GestureClass label = GestureClass::idle;
  double confidence = 0.0;
  DispatchStatus status = DispatchStatus::ignored;
  std::vector<PoseName> plan;  // segment targets when a plan started
};

/// Per-event timings in milliseconds. total runs from line receipt to the
/// moment the plan was handed to the executor (or rejected).
struct LatencyRecord {
  std::uint64_t event_id = 0;
  double classify_ms = 0.0;
  double dispatch_ms = 0.0;
  double total_ms = 0.0;
};

struct PoseUpdate {
  Pose2D pose;
  Twist applied;
};

struct ArmSnapshot {
  JointStateRow row;
  bool busy = false;
};

struct TwistCommand {
  Twist twist;
};

using BusPayload = std::variant<TwistCommand, SpeedCaps, GestureEvent, PoseUpdate, ArmSnapshot, LatencyRecord>;

/// Every message carries the session's monotonic time in ms.
struct BusMessage {
  double t_ms = 0.0;
  BusPayload payload;
};

using Sink = std::function<void(const BusMessage&)>;

/// Unbounded MPMC queue with close semantics.
template <class T>
class Channel {
 public:
  void push(T v) {
    {
      std::lock_guard lk(mu_);
      if (closed_) return;
      q_.push_back(std::move(v));
    }
    cv_.notify_one();
  }

  std::optional<T> try_pop() {
    std::lock_guard lk(mu_);
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    return v;
  }

  /// Waits until an item arrives, the deadline passes or the channel closes.
  std::optional<T> pop_until(SteadyClock::time_point deadline) {
    std::unique_lock lk(mu_);
    cv_.wait_until(lk, deadline, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    return v;
  }

  void close() {
    {
      std::lock_guard lk(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lk(mu_);
    return closed_;
  }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return q_.size();
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> q_;
  bool closed_ = false;
};

/// Fan-out of bus messages to any number of subscriber channels.
class Bus {
 public:
  std::shared_ptr<Channel<BusMessage>> subscribe() {
    auto ch = std::make_shared<Channel<BusMessage>>();
    std::lock_guard lk(mu_);
    subs_.push_back(ch);
    return ch;
  }

  void publish(const BusMessage& m) {
    std::lock_guard lk(mu_);
    for (auto& s : subs_) s->push(m);
  }

  void close() {
    std::lock_guard lk(mu_);
    for (auto& s : subs_) s->close();
  }

 private:
  std::mutex mu_;
  std::vector<std::shared_ptr<Channel<BusMessage>>> subs_;
};

// ---------------------------------------------------------------------------
// Left path

struct LeftConfig {
  BaseControllerConfig control;
  DriveSimConfig drive;
  double input_timeout_ms = 500.0;
};

class LeftPipeline {
 public:
  LeftPipeline(LeftConfig cfg, Sink sink)
      : cfg_(cfg), ctrl_(cfg.control), sim_(cfg.drive), sink_(std::move(sink)) {}

  void on_line(const LeftLine& l, double now_ms) {
    const auto before = ctrl_.caps();
    const auto out = ctrl_.on_sample(l.acc, l.flex_index, l.flex_middle, now_ms);
    last_input_ms_ = now_ms;
    if (!(ctrl_.caps() == before)) emit(now_ms, ctrl_.caps());
    sim_.command(out.twist, sim_.time());
  }

  void on_tilt(const TiltPair& tilt, double now_ms) {
    last_input_ms_ = now_ms;
    sim_.command(ctrl_.on_tilt(tilt), sim_.time());
  }

  void on_flex(Finger f, double now_ms) {
    last_input_ms_ = now_ms;
    emit(now_ms, ctrl_.on_flex(FlexEvent{f, now_ms}));
    sim_.command(ctrl_.last_twist(), sim_.time());
  }

  /// Source lost: stop immediately.
  void on_disconnect(double now_ms) {
    ctrl_.halt();
    last_input_ms_.reset();
    sim_.command({}, sim_.time());
    emit(now_ms, TwistCommand{});
  }

  /// One drive-sim step; publishes the applied twist and the new pose.
  void tick(double now_ms) {
    if (last_input_ms_ && now_ms - *last_input_ms_ > cfg_.input_timeout_ms && !ctrl_.last_twist().is_zero()) {
      ctrl_.halt();
      sim_.command({}, sim_.time());
    }
    const auto row = sim_.tick();
    trajectory_.push_back(row);
    emit(now_ms, TwistCommand{row.applied});
    emit(now_ms, PoseUpdate{row.pose, row.applied});
  }

  const Pose2D& pose() const { return sim_.pose(); }
  const SpeedCaps& caps() const { return ctrl_.caps(); }
  const Twist& twist() const { return ctrl_.last_twist(); }
  const std::vector<TrajectoryRow>& trajectory() const { return trajectory_; }
  BaseController& controller() { return ctrl_; }

 private:
  void emit(double t, BusPayload p) {
    if (sink_) sink_(BusMessage{t, std::move(p)});
  }

  LeftConfig cfg_;
  BaseController ctrl_;
  DriveSim sim_;
  Sink sink_;
  std::optional<double> last_input_ms_;
  std::vector<TrajectoryRow> trajectory_;
};

// ---------------------------------------------------------------------------
// Right path

struct RightConfig {
  PoseLibrary poses = PoseLibrary::defaults();
  PlannerConfig planner;
  double threshold = kDefaultConfidenceThreshold;
  double fs = kDefaultSampleRateHz;
  double hop_ms = kDefaultHopMs;
  double arm_dt = 0.01;
  std::optional<PoseName> arm_start = PoseName::home;
};

class RightPipeline {
 public:
  RightPipeline(RightConfig cfg, std::shared_ptr<const AnyModel> model, Sink sink)
      : cfg_(std::move(cfg)),
        model_(std::move(model)),
        gate_(cfg_.threshold),
        arm_(cfg_.poses, cfg_.arm_dt, cfg_.arm_start),
        sink_(std::move(sink)),
        window_n_(samples_per_window(cfg_.fs, kDefaultWindowMs)),
        hop_n_(static_cast<std::size_t>(std::llround(cfg_.hop_ms * cfg_.fs / 1000.0))) {
    if (hop_n_ == 0) throw std::invalid_argument("hop must cover at least one sample");
  }

  /// A classification result, either received from the glove or produced here.
  void on_gesture(GestureClass label, double confidence, double now_ms, SteadyClock::time_point receipt,
                  double classify_ms = 0.0) {
    last_label_ = label;
    last_confidence_ = confidence;
    if (!gate_.admit(label, confidence)) return;
    const auto t0 = SteadyClock::now();
    GestureEvent ev;
    ev.id = ++event_counter_;
    ev.label = label;
    ev.confidence = confidence;
    auto outcome = dispatch(label, confidence, arm_.state(), cfg_.poses, cfg_.planner, cfg_.threshold);
    ev.status = outcome.status;
    if (outcome.plan) {
      for (const auto& s : outcome.plan->segments) ev.plan.push_back(s.target);
      if (outcome.status == DispatchStatus::preempt)
        arm_.preempt(std::move(*outcome.plan));
      else
        arm_.start(std::move(*outcome.plan));
      ++plans_started_;
    }
    const auto t1 = SteadyClock::now();
    LatencyRecord lat{ev.id, classify_ms, elapsed_ms(t0, t1), elapsed_ms(receipt, t1)};
    events_.push_back(ev);
    latency_.push_back(lat);
    emit(now_ms, std::move(ev));
    emit(now_ms, lat);
  }

  void on_right(const RightLine& r, double now_ms, SteadyClock::time_point receipt) {
    on_gesture(r.label, r.confidence, now_ms, receipt);
  }

  /// Raw sample. Samples are taken to arrive at the configured rate; every
  /// hop a full window is classified.
  void on_imu(const ImuLine& m, double now_ms, SteadyClock::time_point receipt) {
    ImuSample s{static_cast<double>(sample_counter_++) * 1000.0 / cfg_.fs, m.acc, m.gyr, m.mag};
    buffer_.push_back(s);
    if (buffer_.size() > window_n_) buffer_.pop_front();
    if (buffer_.size() == window_n_ && ++since_last_ >= hop_n_) {
      since_last_ = 0;
      ImuWindow w;
      w.fs = cfg_.fs;
      w.samples.assign(buffer_.begin(), buffer_.end());
      on_window(w, now_ms, receipt);
    } else if (buffer_.size() < window_n_) {
      since_last_ = hop_n_ - 1;  // classify as soon as the first window fills
    }
  }

  void on_window(const ImuWindow& w, double now_ms, SteadyClock::time_point receipt) {
    if (!model_) throw std::logic_error("raw IMU input requires a classifier model");
    const auto t0 = SteadyClock::now();
    const auto fv = extract_features(w);
    const auto p = predict(*model_, std::span<const double>(fv));
    const auto best = argmax(p);
    const double classify = elapsed_ms(t0);
    classify_times_.push_back(classify);
    on_gesture(gesture_from_index(best), p[best], now_ms, receipt, classify);
  }

  void tick(double now_ms) {
    const auto row = arm_.tick();
    joints_.push_back(row);
    emit(now_ms, ArmSnapshot{row, arm_.state().busy});
  }

  const ArmState& arm() const { return arm_.state(); }
  const ArmExecutor& executor() const { return arm_; }
  const std::vector<GestureEvent>& events() const { return events_; }
  const std::vector<LatencyRecord>& latency() const { return latency_; }
  const std::vector<JointStateRow>& joints() const { return joints_; }
  const std::vector<double>& classify_times() const { return classify_times_; }
  std::size_t plans_started() const { return plans_started_; }
  std::optional<GestureClass> last_label() const { return last_label_; }

 private:
  void emit(double t, BusPayload p) {
    if (sink_) sink_(BusMessage{t, std::move(p)});
  }

  RightConfig cfg_;
  std::shared_ptr<const AnyModel> model_;
  EpisodeGate gate_;
  ArmExecutor arm_;
  Sink sink_;
  std::size_t window_n_;
  std::size_t hop_n_;
  std::deque<ImuSample> buffer_;
  std::size_t since_last_ = 0;
  std::uint64_t sample_counter_ = 0;
  std::uint64_t event_counter_ = 0;
  std::size_t plans_started_ = 0;
  std::optional<GestureClass> last_label_;
  double last_confidence_ = 0.0;
  std::vector<GestureEvent> events_;
  std::vector<LatencyRecord> latency_;
  std::vector<JointStateRow> joints_;
  std::vector<double> classify_times_;
};

// ---------------------------------------------------------------------------
// Control messages injected by the cockpit.

struct CtlTilt {
  TiltPair tilt;
};
struct CtlFlex {
  Finger finger = Finger::index;
};
enum class GestureInputMode { select, draw };
struct CtlGesture {
  GestureClass label = GestureClass::idle;
  GestureInputMode mode = GestureInputMode::select;
  double confidence = 1.0;
};
using ControlMessage = std::variant<CtlTilt, CtlFlex, CtlGesture>;

struct SessionConfig {
  LeftConfig left;
  RightConfig right;
  double tick_s = 0.01;
  std::uint64_t draw_seed = 99;  // seeds windows synthesised for draw-mode gestures
};

/// Synthetic window for a draw-mode gesture request.
inline ImuWindow synth_window(GestureClass g, std::uint64_t seed, double fs = kDefaultSampleRateHz) {
  SynthSpec s;
  s.gesture = g;
  s.fs = fs;
  s.seed = seed;
  ImuWindow w;
  w.fs = fs;
  w.samples = synth_gesture(s);
  w.label = g;
  return w;
}

// ---------------------------------------------------------------------------
// Deterministic replay: virtual clock, both paths stepped in lockstep.

struct SessionLog {
  std::vector<TrajectoryRow> trajectory;
  std::vector<JointStateRow> joints;
  std::vector<GestureEvent> events;
  std::vector<LatencyRecord> latency;
  std::vector<std::pair<double, SpeedCaps>> caps;  // every cap change
  std::vector<double> classify_ms;
  std::size_t plans_started = 0;
};

/// Runs a replay through both pipelines on a virtual 100 Hz clock. The run
/// lasts `duration_s`, or until the last entry plus `settle_s` when no
/// duration is given.
inline SessionLog replay_session(std::span<const ReplayEntry> entries, const SessionConfig& cfg,
                                 std::shared_ptr<const AnyModel> model, std::optional<double> duration_s = {},
                                 double settle_s = 0.0) {
  SessionLog log;
  Sink sink = [&](const BusMessage& m) {
    if (const auto* c = std::get_if<SpeedCaps>(&m.payload)) log.caps.emplace_back(m.t_ms, *c);
  };
  LeftPipeline left(cfg.left, sink);
  RightPipeline right(cfg.right, std::move(model), sink);
  const double end_s = duration_s.value_or(entries.empty() ? 0.0 : entries.back().t_ms / 1000.0 + settle_s);
  const auto ticks = static_cast<std::size_t>(std::llround(end_s / cfg.tick_s));
  std::size_t next = 0;
  for (std::size_t k = 0; k < ticks; ++k) {
    const double now_ms = static_cast<double>(k) * cfg.tick_s * 1000.0;
    while (next < entries.size() && entries[next].t_ms <= now_ms + 1e-9) {
      const auto receipt = SteadyClock::now();
      const double t = entries[next].t_ms;
      std::visit(
          [&](const auto& line) {
            using L = std::decay_t<decltype(line)>;
            if constexpr (std::is_same_v<L, LeftLine>)
              left.on_line(line, t);
            else if constexpr (std::is_same_v<L, RightLine>)
              right.on_right(line, t, receipt);
            else
              right.on_imu(line, t, receipt);
          },
          entries[next].line);
      ++next;
    }
    left.tick(now_ms);
    right.tick(now_ms);
  }
  log.trajectory = left.trajectory();
  log.joints = right.joints();
  log.events = right.events();
  log.latency = right.latency();
  log.classify_ms = right.classify_times();
  log.plans_started = right.plans_started();
  return log;
}

// ---------------------------------------------------------------------------
// Live session: one worker thread per path, ticking at 100 Hz.

class TeleopSession {
 public:
  TeleopSession(SessionConfig cfg, std::shared_ptr<const AnyModel> model, Bus& bus)
      : cfg_(std::move(cfg)), model_(std::move(model)), bus_(bus) {}

  ~TeleopSession() { stop(); }

  TeleopSession(const TeleopSession&) = delete;
  TeleopSession& operator=(const TeleopSession&) = delete;

  void start() {
    if (running_.exchange(true)) return;
    t0_ = SteadyClock::now();
    left_thread_ = std::thread([this] { left_loop(); });
    right_thread_ = std::thread([this] { right_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    left_in_.close();
    right_in_.close();
    if (left_thread_.joinable()) left_thread_.join();
    if (right_thread_.joinable()) right_thread_.join();
  }

  double now_ms() const { return elapsed_ms(t0_); }

  void push_left(const LeftLine& l) { left_in_.push({l, SteadyClock::now()}); }
  void left_disconnected() { left_in_.push({Disconnect{}, SteadyClock::now()}); }

  void push_right(const RightLine& r) { right_in_.push({r, SteadyClock::now()}); }
  void push_right(const ImuLine& m) { right_in_.push({m, SteadyClock::now()}); }

  void push_line(const WireLine& w) {
    std::visit(
        [&](const auto& l) {
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, LeftLine>)
            push_left(l);
          else
            push_right(l);
        },
        w);
  }

  void push_control(const ControlMessage& c) {
    const auto now = SteadyClock::now();
    std::visit(
        [&](const auto& m) {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, CtlGesture>)
            right_in_.push({m, now});
          else
            left_in_.push({m, now});
        },
        c);
  }

  /// Blocks the right worker for `ms` (fault injection).
  void inject_right_stall(double ms) { right_in_.push({Stall{ms}, SteadyClock::now()}); }

  /// Snapshot accessors; valid after stop().
  const std::vector<GestureEvent>& events() const { return events_; }
  const std::vector<LatencyRecord>& latency() const { return latency_; }
  std::size_t plans_started() const { return plans_started_; }
  std::vector<TrajectoryRow> trajectory() const { return trajectory_; }
  std::vector<JointStateRow> joints() const { return joints_; }

 private:
  struct Disconnect {};
  struct Stall {
    double ms;
  };
  using LeftItem = std::variant<LeftLine, CtlTilt, CtlFlex, Disconnect>;
  using RightItem = std::variant<RightLine, ImuLine, CtlGesture, Stall>;
  template <class V>
  struct Stamped {
    V item;
    SteadyClock::time_point receipt;
  };

  Sink bus_sink() {
    return [this](const BusMessage& m) { bus_.publish(m); };
  }

  std::chrono::nanoseconds tick() const {
    return std::chrono::nanoseconds(static_cast<std::int64_t>(cfg_.tick_s * 1e9));
  }

  void left_loop() {
    LeftPipeline left(cfg_.left, bus_sink());
    auto next = t0_ + tick();
    while (running_) {
      while (SteadyClock::now() < next) {
        auto in = left_in_.pop_until(next);
        if (!in) break;
        const double now = now_ms();
        std::visit(
            [&](const auto& item) {
              using I = std::decay_t<decltype(item)>;
              if constexpr (std::is_same_v<I, LeftLine>)
                left.on_line(item, now);
              else if constexpr (std::is_same_v<I, CtlTilt>)
                left.on_tilt(item.tilt, now);
              else if constexpr (std::is_same_v<I, CtlFlex>)
                left.on_flex(item.finger, now);
              else
                left.on_disconnect(now);
            },
            in->item);
      }
      if (!running_) break;
      left.tick(elapsed_ms(t0_, next));
      next += tick();
    }
    trajectory_ = left.trajectory();
  }

  void right_loop() {
    RightPipeline right(cfg_.right, model_, bus_sink());
    std::uint64_t draws = 0;
    auto next = t0_ + tick();
    while (running_) {
      while (SteadyClock::now() < next) {
        auto in = right_in_.pop_until(next);
        if (!in) break;
        const double now = now_ms();
        std::visit(
            [&](const auto& item) {
              using I = std::decay_t<decltype(item)>;
              if constexpr (std::is_same_v<I, RightLine>) {
                right.on_right(item, now, in->receipt);
              } else if constexpr (std::is_same_v<I, ImuLine>) {
                right.on_imu(item, now, in->receipt);
              } else if constexpr (std::is_same_v<I, CtlGesture>) {
                if (item.mode == GestureInputMode::draw && model_)
                  right.on_window(synth_window(item.label, cfg_.draw_seed + draws++, cfg_.right.fs), now, in->receipt);
                else
                  right.on_gesture(item.label, item.confidence, now, in->receipt);
              } else {
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(item.ms));
              }
            },
            in->item);
      }
      if (!running_) break;
      right.tick(elapsed_ms(t0_, next));
      next += tick();
    }
    events_ = right.events();
    latency_ = right.latency();
    plans_started_ = right.plans_started();
    joints_ = right.joints();
  }

  SessionConfig cfg_;
  std::shared_ptr<const AnyModel> model_;
  Bus& bus_;
  std::atomic<bool> running_{false};
  SteadyClock::time_point t0_{};
  Channel<Stamped<LeftItem>> left_in_;
  Channel<Stamped<RightItem>> right_in_;
  std::thread left_thread_;
  std::thread right_thread_;

  std::vector<GestureEvent> events_;
  std::vector<LatencyRecord> latency_;
  std::size_t plans_started_ = 0;
  std::vector<TrajectoryRow> trajectory_;
  std::vector<JointStateRow> joints_;
};

// ---------------------------------------------------------------------------
// Latency summary

struct StageStats {
  double mean = 0.0;
  double stddev = 0.0;
  double p95 = 0.0;
};

struct LatencyReport {
  std::size_t count = 0;
  StageStats classify;
  StageStats dispatch;
  StageStats total;
};

inline StageStats stage_stats(std::vector<double> v) {
  StageStats s;
  const auto n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  for (double x : v) s.stddev += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(s.stddev / n);
  std::sort(v.begin(), v.end());
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
  s.p95 = v[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

inline LatencyReport latency_report(std::span<const LatencyRecord> records) {
  if (records.empty()) throw ReportError("latency report needs at least one gesture event");
  std::vector<double> c, d, t;
  for (const auto& r : records) {
    c.push_back(r.classify_ms);
    d.push_back(r.dispatch_ms);
    t.push_back(r.total_ms);
  }
  return {records.size(), stage_stats(c), stage_stats(d), stage_stats(t)};
}

}  // namespace duohand
