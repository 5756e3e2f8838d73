// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <complex>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "duohand/arm.hpp"
#include "duohand/base_control.hpp"
#include "duohand/dataset.hpp"
#include "duohand/drive_sim.hpp"
#include "duohand/model_io.hpp"
#include "duohand/protocol.hpp"
#include "duohand/quantize.hpp"
#include "duohand/scenarios.hpp"
#include "duohand/service.hpp"
#include "duohand/spectral.hpp"

using namespace duohand;
using namespace std::chrono_literals;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(SteadyClock::time_point t0) { return std::chrono::duration<double>(SteadyClock::now() - t0).count(); }

// Trained once, shared by criteria 3, 5, 6 and 11.
struct Trained {
  Dataset data;
  TrainResult<float> result;
  QuantModel q;
  double train_s = 0.0;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained x;
    const auto t0 = SteadyClock::now();
    x.data = make_feature_dataset(build_dataset(DatasetSpec{}));
    x.result = train<float>(x.data, TrainConfig{});
    std::vector<std::vector<double>> calib;
    for (auto i : x.result.train_indices) calib.push_back(x.data[i].x);
    x.q = quantize_int8(x.result.model, calib);
    x.train_s = seconds_since(t0);
    return x;
  }();
  return t;
}

Outcome c1_fft() {
  const auto t0 = SteadyClock::now();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 2.0);
  double worst = 0.0, worst_parseval = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<double, 16> x;
    for (auto& v : x) v = g(rng);
    const auto X = fft16(x);
    double scale = 0.0, err = 0.0, te = 0.0, fe = 0.0;
    for (std::size_t k = 0; k < 16; ++k) {
      std::complex<double> ref = 0.0;
      for (std::size_t n = 0; n < 16; ++n)
        ref += x[n] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * n) / 16.0);
      scale = std::max(scale, std::abs(ref));
      err = std::max(err, std::abs(X.bins[k] - ref));
      fe += std::norm(X.bins[k]);
    }
    for (double v : x) te += v * v;
    worst = std::max(worst, err / scale);
    worst_parseval = std::max(worst_parseval, std::abs(te - fe / 16.0) / te);
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && worst_parseval < 1e-9 && secs < 1.0,
          fmt("max rel err %.2e, Parseval rel err %.2e, %.3f s", worst, worst_parseval, secs)};
}

Outcome c2_constants() {
  DatasetSpec d;
  d.per_class_ms = 8000;
  bool lengths = true;
  std::size_t n = 0;
  for (const auto& w : build_dataset(d)) {
    lengths = lengths && extract_features(w).size() == 117;
    ++n;
  }
  const double df = frequency_resolution(100.0), fmax = max_frequency(100.0);
  return {df == 6.25 && fmax == 43.75 && lengths && kFeatureDim == 117,
          fmt("delta_f %.4f Hz, f_max %.4f Hz, %zu windows all 117 features", df, fmax, n)};
}

Outcome c3_training() {
  const auto& t = trained();
  Dataset val;
  for (auto i : t.result.val_indices) val.push_back(t.data[i]);
  const double f = evaluate(t.result.model, val).accuracy();
  const double i8 = evaluate(t.q, val).accuracy();
  return {t.result.history.size() <= 30 && f >= 0.99 && i8 >= f - 0.005 && t.train_s < 120.0,
          fmt("%zu epochs, float val acc %.4f, int8 val acc %.4f, %.1f s", t.result.history.size(), f, i8, t.train_s)};
}

Outcome c4_gradient() {
  auto model = BasicModel<double>::glorot_init(kTinyDims, 17);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0), gb(0.0, 0.3);
  for (auto& l : model.layers)
    for (auto& b : l.b) b += gb(rng);
  Dataset data;
  for (std::size_t i = 0; i < 5; ++i) {
    Sample s;
    s.x.resize(117);
    for (auto& v : s.x) v = g(rng);
    s.label = i % 7;
    data.push_back(s);
  }
  const std::vector<std::size_t> batch{0, 1, 2, 3, 4};
  const auto an = loss_and_gradient(model, data, batch);
  const double h = 1e-4;
  double d2 = 0, a2 = 0, n2 = 0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    for (auto* pair : {&model.layers[l].w, &model.layers[l].b}) {
      const auto& grads = pair == &model.layers[l].w ? an.grad.layers[l].w : an.grad.layers[l].b;
      for (std::size_t i = 0; i < pair->size(); ++i) {
        const double keep = (*pair)[i];
        (*pair)[i] = keep + h;
        const double up = loss_and_gradient(model, data, batch).loss;
        (*pair)[i] = keep - h;
        const double down = loss_and_gradient(model, data, batch).loss;
        (*pair)[i] = keep;
        const double num = (up - down) / (2 * h);
        d2 += (grads[i] - num) * (grads[i] - num);
        a2 += grads[i] * grads[i];
        n2 += num * num;
      }
    }
  }
  const double rel = std::sqrt(d2) / std::max(std::sqrt(a2), std::sqrt(n2));
  return {rel < 1e-3, fmt("relative error %.2e over %zu parameters", rel, model.parameter_count())};
}

Outcome c5_quant_budget() {
  const auto& t = trained();
  const double ratio = double(payload_bytes(t.q)) / double(payload_bytes(t.result.model));
  const auto windows = build_dataset([] {
    DatasetSpec d;
    d.per_class_ms = 20000;
    d.seed = 1234;
    return d;
  }());
  // Full classifier step per window: features, then int8 network.
  const auto t0 = SteadyClock::now();
  std::size_t sink = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto fv = extract_features(windows[static_cast<std::size_t>(i) % windows.size()]);
    sink += argmax(forward_int8(t.q, fv));
  }
  const double ms = seconds_since(t0) * 1000.0 / 1000.0;
  const auto t1 = SteadyClock::now();
  const auto fv = extract_features(windows.front());
  for (int i = 0; i < 1000; ++i) sink += argmax(forward_int8(t.q, fv));
  const double net_ms = seconds_since(t1);
  return {ratio <= 0.30 && ms <= 1.0,
          fmt("payload %zu / %zu bytes = %.3f; features+int8 %.4f ms, int8 net alone %.4f ms (mean of 1000)%s",
              payload_bytes(t.q), payload_bytes(t.result.model), ratio, ms, net_ms, sink == 0 ? "" : "")};
}

Outcome c6_idle() {
  const auto stream = idle_script(60000, 606);
  auto model = std::make_shared<const AnyModel>(trained().q);
  const auto log = replay_session(stream, SessionConfig{}, model, 60.0);
  std::size_t actionable = 0;
  for (const auto& e : log.events) actionable += e.label != GestureClass::idle;
  return {log.plans_started == 0 && actionable == 0 && log.classify_ms.size() > 200,
          fmt("%zu windows classified, %zu gesture events, %zu plans", log.classify_ms.size(), log.events.size(),
              log.plans_started)};
}

Outcome c7_caps() {
  SpeedCaps c;
  for (int i = 0; i < 8; ++i) c = flex_update_caps(c, {Finger::index, 0});
  SpeedCaps d;
  d.v_max = d.w_max = 1.0;
  for (int i = 0; i < 7; ++i) d = flex_update_caps(d, {Finger::middle, 0});
  SessionConfig cfg;
  const SpeedProfileScript script;
  cfg.left.control.index_flex.debounce_ms = script.debounce_ms;
  cfg.left.control.middle_flex.debounce_ms = script.debounce_ms;
  const auto log = replay_session(speed_profile_script(script), cfg, nullptr, 10.0);
  const auto check = check_speed_profile(log.trajectory);
  std::string phases;
  for (const auto& p : check.phases) phases += fmt(" %s[%.2f..%.2f]%s", p.name.c_str(), p.min_v, p.max_v, p.ok ? "" : "!");
  return {c.v_max == 1.00 && std::abs(d.v_max - 0.4783) <= 1e-4 && check.ok(),
          fmt("8 index -> %.4f, 7 middle -> %.4f; replay:", c.v_max, d.v_max) + phases};
}

Outcome c8_tilt() {
  std::size_t violations = 0, cells = 0;
  const SpeedCaps caps;
  for (int t = -30; t <= 30; ++t) {
    for (int p = -30; p <= 30; ++p) {
      ++cells;
      const auto tw = tilt_to_twist({double(t), double(p)}, caps);
      Twist want{};
      if (std::abs(t) < 5 && std::abs(p) < 5)
        want = {};
      else if (t > 15)
        want = {0.5, 0.0};
      else if (t < -15)
        want = {-0.5, 0.0};
      else if (p > 15)
        want = {0.0, 0.5};
      else if (p < -15)
        want = {0.0, -0.5};
      violations += !(tw == want) || tw.linear_x * tw.angular_z != 0.0;
    }
  }
  return {violations == 0, fmt("%zu grid cells, %zu violations", cells, violations)};
}

Outcome c9_kinematics() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0), h(-std::numbers::pi, std::numbers::pi);
  double worst = 0.0, worst_plain = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Twist tw{u(rng), u(rng)};
    const Pose2D start{u(rng), u(rng), h(rng)};
    Pose2D p = start;
    for (int k = 0; k < 100; ++k) p = step(p, tw, 0.01);
    // 1e5 Euler substeps; the position update uses the mid-substep heading.
    const int n = 100000;
    const double dt = 1.0 / n;
    double x = start.x, y = start.y, th = start.heading;
    double xp = start.x, yp = start.y, thp = start.heading;
    for (int k = 0; k < n; ++k) {
      const double mid = th + 0.5 * tw.angular_z * dt;
      x += tw.linear_x * std::cos(mid) * dt;
      y += tw.linear_x * std::sin(mid) * dt;
      th += tw.angular_z * dt;
      xp += tw.linear_x * std::cos(thp) * dt;
      yp += tw.linear_x * std::sin(thp) * dt;
      thp += tw.angular_z * dt;
    }
    worst = std::max(worst, std::hypot(p.x - x, p.y - y));
    worst_plain = std::max(worst_plain, std::hypot(p.x - xp, p.y - yp));
  }
  return {worst < 1e-6, fmt("max position error %.2e m (first-order Euler oracle: %.2e m)", worst, worst_plain)};
}

Outcome c10_homing() {
  const auto lib = PoseLibrary::defaults();
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> ticks(0, 800), cls(0, 6);
  std::size_t violations = 0, plans = 0;
  for (int seq = 0; seq < 200; ++seq) {
    ArmExecutor ex(lib, 0.01, static_cast<PoseName>(seq % 6));
    for (int step = 0; step < 10; ++step) {
      const auto g = gesture_from_index(static_cast<std::size_t>(cls(rng)));
      const double c = u(rng);
      const auto before = ex.state();
      const auto o = dispatch(g, c, before, lib);
      if (o.plan) {
        ++plans;
        const auto first = o.plan->segments.front().target;
        if (first != PoseName::home && before.at_pose != PoseName::home) ++violations;
        if (o.status == DispatchStatus::preempt)
          ex.preempt(*o.plan);
        else
          ex.start(*o.plan);
      } else if (g != GestureClass::idle && c >= 0.6 && o.status != DispatchStatus::busy) {
        ++violations;
      }
      const int n = ticks(rng);
      for (int k = 0; k < n; ++k) ex.tick();
    }
  }
  ArmExecutor away(lib, 0.01, PoseName::place3);
  away.start(*dispatch(GestureClass::to_fro, 0.9, away.state(), lib).plan);
  const double total = double(away.run_to_completion().size()) * 0.01;
  return {violations == 0 && std::abs(total - 9.0) <= 0.1 && away.state().at_pose == PoseName::pickup,
          fmt("%zu plans, %zu homing violations; pickup from away %.2f s", plans, violations, total)};
}

Outcome c11_latency() {
  // Raw 9-axis gestures streamed in real time through the threaded session.
  Bus bus;
  auto sub = bus.subscribe();
  SessionConfig cfg;
  cfg.right.arm_start = PoseName::place;
  TeleopSession s(cfg, std::make_shared<const AnyModel>(trained().q), bus);
  s.start();
  std::vector<SteadyClock::time_point> stamps;
  std::thread counter([&] {
    while (true) {
      auto m = sub->pop_until(SteadyClock::now() + 50ms);
      if (m && std::holds_alternative<TwistCommand>(m->payload)) stamps.push_back(SteadyClock::now());
      if (!m && sub->closed()) break;
    }
  });
  const GestureClass seq[] = {GestureClass::idle, GestureClass::up_down, GestureClass::idle, GestureClass::circle,
                              GestureClass::idle};
  const auto t0 = SteadyClock::now();
  std::size_t k = 0;
  for (std::size_t i = 0; i < std::size(seq); ++i) {
    SynthSpec sp;
    sp.gesture = seq[i];
    sp.duration_ms = 2500;
    sp.seed = 1100 + i;
    for (const auto& x : synth_gesture(sp)) {
      std::this_thread::sleep_until(t0 + std::chrono::milliseconds(10 * k++));
      s.push_right(to_imu_line(x));
      s.push_left(LeftLine{{0.5, 0.0, 0.866}, 300, 300});
    }
  }
  // Stall the right path for 1 s and count left ticks by wall clock.
  const auto a = SteadyClock::now();
  std::this_thread::sleep_for(1000ms);
  s.inject_right_stall(1000.0);
  std::this_thread::sleep_for(10ms);
  const auto b = SteadyClock::now();
  std::this_thread::sleep_for(980ms);
  const auto c = SteadyClock::now();
  std::this_thread::sleep_for(200ms);
  s.stop();
  bus.close();
  counter.join();
  auto count = [&](auto from, auto to) {
    return static_cast<double>(std::count_if(stamps.begin(), stamps.end(), [&](auto t) { return t >= from && t < to; }));
  };
  const double base = count(a, a + (c - b)), stalled = count(b, c);
  const double expected = std::chrono::duration<double>(c - b).count() / cfg.tick_s;
  if (s.latency().empty()) return {false, "no gesture events in the session"};
  const auto rep = latency_report(s.latency());
  const bool cadence = std::abs(stalled - expected) <= 1.0 && std::abs(base - expected) <= 1.0;
  return {rep.total.mean < 100.0 && cadence,
          fmt("%zu events, total mean %.3f ms (p95 %.3f), classify mean %.3f ms; left ticks %.0f before / %.0f "
              "during stall, expected %.1f",
              rep.count, rep.total.mean, rep.total.p95, rep.classify.mean, base, stalled, expected)};
}

Outcome c12_protocol() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> flex(0, 1023), cls(0, 6), kind(0, 2), conf(0, 1000);
  std::uniform_int_distribution<long> acc(-16000, 16000), gyr(-2000000, 2000000), mag(-100000, 100000);
  std::vector<WireLine> valid;
  std::size_t mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    WireLine w;
    switch (kind(rng)) {
      case 0: w = LeftLine{{acc(rng) / 1000.0, acc(rng) / 1000.0, acc(rng) / 1000.0}, flex(rng), flex(rng)}; break;
      case 1: w = RightLine{gesture_from_index(std::size_t(cls(rng))), conf(rng) / 1000.0}; break;
      default:
        w = ImuLine{{acc(rng) / 1000.0, acc(rng) / 1000.0, acc(rng) / 1000.0},
                    {gyr(rng) / 1000.0, gyr(rng) / 1000.0, gyr(rng) / 1000.0},
                    {mag(rng) / 1000.0, mag(rng) / 1000.0, mag(rng) / 1000.0}};
    }
    const auto text = format_line(w);
    try {
      if (!(parse_line(text) == w) || format_line(parse_line(text)) != text) ++mismatches;
    } catch (const std::exception&) {
      ++mismatches;
    }
    valid.push_back(w);
  }
  // Each mutation below makes a valid line invalid.
  std::size_t accepted = 0, crashed = 0, cases = 0;
  std::uniform_int_distribution<int> mut(0, 6);
  for (const auto& w : valid) {
    std::string s = format_line(w);
    const auto commas = std::count(s.begin(), s.end(), ',');
    std::uniform_int_distribution<std::size_t> pos(2, s.size() - 1);
    switch (mut(rng)) {
      case 0: s += ",1"; break;                                  // extra field
      case 1: s = s.substr(0, s.rfind(',')); break;             // missing field
      case 2: s[pos(rng)] = 'x'; break;                          // junk character
      case 3: s.insert(s.find(',') + 1, " "); break;            // leading space
      case 4: s[0] = "lrQ"[std::size_t(cls(rng)) % 3]; break;   // bad tag
      case 5: s.insert(s.rfind(','), "e5"); break;               // exponent
      case 6: s.insert(s.find(',', s.find(',') + 1), ",,"); break;  // empty fields
    }
    (void)commas;
    ++cases;
    try {
      parse_line(s);
      ++accepted;
    } catch (const ParseError&) {
    } catch (const RangeError&) {
    } catch (...) {
      ++crashed;
    }
  }
  return {mismatches == 0 && accepted == 0 && crashed == 0,
          fmt("10000 round trips, %zu mismatches; %zu malformed cases, %zu accepted, %zu unexpected errors", mismatches,
              cases, accepted, crashed)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "fft correctness", c1_fft},
      {2, "spectral constants", c2_constants},
      {3, "training", c3_training},
      {4, "gradient check", c4_gradient},
      {5, "quantization budget", c5_quant_budget},
      {6, "idle rejection", c6_idle},
      {7, "cap arithmetic", c7_caps},
      {8, "tilt mapping", c8_tilt},
      {9, "drive kinematics", c9_kinematics},
      {10, "homing-first policy", c10_homing},
      {11, "end-to-end latency", c11_latency},
      {12, "protocol round trip", c12_protocol},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %-20s %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
