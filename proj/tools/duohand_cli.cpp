// duohand: dataset generation, training, quantization, evaluation and
// teleoperation runs from the command line.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "duohand/dataset.hpp"
#include "duohand/model_io.hpp"
#include "duohand/quantize.hpp"
#include "duohand/scenarios.hpp"
#include "duohand/service.hpp"
#include "duohand/ws_bridge.hpp"

namespace fs = std::filesystem;
using namespace duohand;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// logging

enum class LogLevel { quiet, info, debug };
LogLevel g_log = LogLevel::info;

void init_log() {
  const char* env = std::getenv("DUOHAND_LOG");
  if (!env || !*env) return;
  const std::string v = env;
  if (v == "quiet")
    g_log = LogLevel::quiet;
  else if (v == "info")
    g_log = LogLevel::info;
  else if (v == "debug")
    g_log = LogLevel::debug;
  else
    throw CliError("DUOHAND_LOG must be quiet, info or debug, got '" + v + "'");
}

template <class... A>
void log_at(LogLevel lvl, A&&... parts) {
  if (g_log < lvl) return;
  std::ostringstream os;
  (os << ... << parts);
  std::cerr << os.str() << '\n';
}
#define LOG_INFO(...) log_at(LogLevel::info, __VA_ARGS__)
#define LOG_DEBUG(...) log_at(LogLevel::debug, __VA_ARGS__)

// ---------------------------------------------------------------------------
// config files: flat key=value, keys are the subcommand's long option names

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError("cannot open config " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t n = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CliError(path + ":" + std::to_string(n) + ": expected key=value");
    auto key = trim(line.substr(0, eq));
    auto val = trim(line.substr(eq + 1));
    if (key.empty()) throw CliError(path + ":" + std::to_string(n) + ": empty key");
    out.emplace_back(key, val);
  }
  return out;
}

bool internal_option(const std::string& name) { return name == "help" || name == "config" || name == "dump-config"; }

/// Fills options not given on the command line from the config file.
void apply_config(CLI::App& sub, const std::string& path) {
  std::map<std::string, std::vector<std::string>> values;
  for (auto& [k, v] : read_config(path)) {
    auto* opt = internal_option(k) ? nullptr : sub.get_option_no_throw("--" + k);
    if (!opt) throw CliError("config " + path + ": unknown key '" + k + "' for " + sub.get_name());
    values[k].push_back(v);
  }
  for (auto& [k, vs] : values) {
    auto* opt = sub.get_option("--" + k);
    if (opt->count() > 0) continue;
    try {
      for (const auto& v : vs) opt->add_result(v);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw CliError("config " + path + ": " + k + ": " + e.what());
    }
  }
}

void dump_config(const CLI::App& sub) {
  for (const auto* opt : sub.get_options()) {
    const auto name = opt->get_single_name();
    if (opt->get_lnames().empty() || internal_option(name)) continue;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) std::cout << name << '=' << r << '\n';
    } else if (!opt->get_default_str().empty()) {
      std::cout << name << '=' << opt->get_default_str() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// small helpers

/// "60s", "1500ms", "2m" or a bare number of seconds.
double parse_duration_ms(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw CliError("bad duration '" + text + "'");
  }
  const auto unit = text.substr(used);
  if (unit.empty() || unit == "s") return v * 1000.0;
  if (unit == "ms") return v;
  if (unit == "m" || unit == "min") return v * 60000.0;
  throw CliError("bad duration unit in '" + text + "' (use ms, s or m)");
}

void require(const std::string& value, const char* name) {
  if (value.empty()) throw CliError(std::string("--") + name + " is required");
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw CliError("cannot write " + p.string());
  return out;
}

std::vector<ReplayEntry> load_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CliError("cannot open replay " + path);
  try {
    return read_replay(in);
  } catch (const ReplayError& e) {
    throw CliError(path + ": " + e.what());
  }
}

AnyModel load_model_file(const std::string& path) {
  try {
    return load_model(read_file_bytes(path));
  } catch (const std::exception& e) {
    throw CliError(path + ": " + e.what());
  }
}

LabelledStream load_dataset(const std::string& path, double fs) {
  LabelledStream ds;
  try {
    ds = load_dataset_csv(path);
  } catch (const std::exception& e) {
    throw CliError(path + ": " + e.what());
  }
  if (ds.samples.size() >= 2) {
    const double got = 1000.0 / (ds.samples[1].t_ms - ds.samples[0].t_ms);
    if (std::abs(got - fs) > 0.5)
      throw CliError(path + ": sample rate " + std::to_string(got) + " Hz does not match the expected " +
                     std::to_string(fs) + " Hz");
  }
  return ds;
}

Dataset dataset_features(const LabelledStream& ds, double fs, double hop_ms) {
  const auto windows = windows_from_stream(ds, fs, hop_ms);
  if (windows.empty()) throw CliError("dataset holds no complete 2000 ms window");
  return make_feature_dataset(windows);
}

std::size_t input_dim(const AnyModel& m) { return model_input_dim(m); }

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  std::uint64_t seed = 7;
  std::string per_class = "300s";
  std::string test_per_class = "60s";
  double noise = kDefaultNoiseSigmaG;
  std::string out = ".";
};

int cmd_gen(const GenArgs& a) {
  DatasetSpec spec;
  spec.seed = a.seed;
  spec.noise_sigma = a.noise;
  spec.per_class_ms = parse_duration_ms(a.per_class);
  DatasetSpec test = spec;
  test.per_class_ms = parse_duration_ms(a.test_per_class);
  test.seed = a.seed + 1000003;
  LabelledStream tr, te;
  try {
    tr = build_stream(spec);
    te = build_stream(test);
  } catch (const GenerationError& e) {
    throw CliError(e.what());
  }
  const fs::path dir(a.out);
  {
    auto f = open_out(dir / "train.csv");
    write_dataset_csv(f, tr);
  }
  {
    auto f = open_out(dir / "test.csv");
    write_dataset_csv(f, te);
  }
  const auto counts = class_counts(windows_from_stream(tr));
  std::size_t total = 0;
  std::cout << "train windows per class:";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::cout << ' ' << kGestureNames[i] << '=' << counts[i];
    total += counts[i];
  }
  std::cout << "\ntrain windows " << total << ", test windows " << windows_from_stream(te).size() << '\n';
  LOG_INFO("wrote ", (dir / "train.csv").string(), " and ", (dir / "test.csv").string());
  return 0;
}

// ---------------------------------------------------------------------------
// train / quantize / eval

struct TrainArgs {
  std::string data;
  std::string model = "model.tnn";
  std::string metrics = "metrics.csv";
  std::size_t epochs = 30;
  double lr = 5e-4;
  std::size_t batch = 32;
  double val = 0.20;
  std::uint64_t seed = 7;
  double hop_ms = kDefaultWindowMs;
};

int cmd_train(const TrainArgs& a) {
  require(a.data, "data");
  const auto data = dataset_features(load_dataset(a.data, kDefaultSampleRateHz), kDefaultSampleRateHz, a.hop_ms);
  TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.base_lr = a.lr;
  cfg.batch_size = a.batch;
  cfg.val_fraction = a.val;
  cfg.seed = a.seed;
  LOG_INFO("training on ", data.size(), " windows");
  const auto r = train<float>(data, cfg);
  write_file_bytes(a.model, save_model(r.model));
  auto m = open_out(a.metrics);
  m << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& e : r.history) {
    m << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ',' << e.val_acc << '\n';
    LOG_DEBUG("epoch ", e.epoch, " loss ", e.train_loss, " val_acc ", e.val_acc);
  }
  const auto& last = r.history.back();
  std::printf("epochs %zu, train acc %.4f, val acc %.4f, parameters %zu\n", r.history.size(), last.train_acc,
              last.val_acc, r.model.parameter_count());
  LOG_INFO("wrote ", a.model, " and ", a.metrics);
  return 0;
}

struct QuantArgs {
  std::string model;
  std::string data;
  std::string out = "model_int8.tnn";
};

int cmd_quantize(const QuantArgs& a) {
  require(a.model, "model");
  require(a.data, "data");
  const auto any = load_model_file(a.model);
  const auto* fm = std::get_if<TinyModel>(&any);
  if (!fm) throw CliError(a.model + ": already quantized");
  const auto data = dataset_features(load_dataset(a.data, kDefaultSampleRateHz), kDefaultSampleRateHz,
                                     kDefaultWindowMs);
  if (input_dim(any) != kFeatureDim) throw CliError(a.model + ": input width does not match the feature vector");
  const auto q = quantize_int8(*fm, feature_rows(data));
  write_file_bytes(a.out, save_model(q));
  const auto fb = payload_bytes(*fm), qb = payload_bytes(q);
  std::printf("payload float %zu bytes, int8 %zu bytes, ratio %.3f\n", fb, qb, double(qb) / double(fb));
  LOG_INFO("wrote ", a.out);
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string csv;
};

int cmd_eval(const EvalArgs& a) {
  require(a.model, "model");
  require(a.data, "data");
  const auto model = load_model_file(a.model);
  if (input_dim(model) != kFeatureDim)
    throw CliError(a.model + ": model expects " + std::to_string(input_dim(model)) + " features, dataset gives " +
                   std::to_string(kFeatureDim));
  const auto data = dataset_features(load_dataset(a.data, kDefaultSampleRateHz), kDefaultSampleRateHz,
                                     kDefaultWindowMs);
  const auto cm = evaluate_with([&](std::span<const double> x) { return predict(model, x); }, data, kNumGestures);
  std::cout << (std::holds_alternative<QuantModel>(model) ? "int8" : "float32") << " model, " << data.size()
            << " windows\n"
            << cm.to_text();
  std::size_t false_pos = 0;
  const auto idle = index_of(GestureClass::idle);
  for (std::size_t j = 0; j < kNumGestures; ++j)
    if (j != idle) false_pos += cm.at(idle, j);
  std::cout << "idle windows classified as a gesture: " << false_pos << '\n';
  if (!a.csv.empty()) {
    auto f = open_out(a.csv);
    f << cm.to_csv();
    LOG_INFO("wrote ", a.csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// replay / sim

struct RunArgs {
  std::vector<std::string> replay;
  std::string model;
  std::string poses;
  std::string out = "run";
  std::string arm_start = "home";
  double duration = -1.0;
  double settle = 1.0;
  double flex_debounce_ms = 300.0;
  int flex_threshold = 600;
  double tilt_threshold = 15.0;
  double dead_zone = kDefaultDeadZoneDeg;
  double alpha = kDefaultLowPassAlpha;
  double confidence = kDefaultConfidenceThreshold;
  double input_timeout_ms = 500.0;
  bool cockpit = false;
  unsigned short port = 8765;
};

SessionConfig session_config(const RunArgs& a) {
  SessionConfig cfg;
  auto& c = cfg.left.control;
  c.alpha = a.alpha;
  c.thresholds.command_deg = a.tilt_threshold;
  c.thresholds.dead_zone_deg = a.dead_zone;
  for (auto* f : {&c.index_flex, &c.middle_flex}) {
    f->debounce_ms = a.flex_debounce_ms;
    f->threshold = a.flex_threshold;
  }
  cfg.left.input_timeout_ms = a.input_timeout_ms;
  cfg.right.threshold = a.confidence;
  const auto start = pose_from_string(a.arm_start);
  if (!start) throw CliError("unknown --arm-start pose '" + a.arm_start + "'");
  cfg.right.arm_start = *start;
  if (!a.poses.empty()) {
    std::ifstream in(a.poses);
    if (!in) throw CliError("cannot open poses " + a.poses);
    try {
      cfg.right.poses = PoseLibrary::parse(in);
    } catch (const PoseConfigError& e) {
      throw CliError(a.poses + ": " + e.what());
    }
  }
  return cfg;
}

std::vector<ReplayEntry> merged_replays(const std::vector<std::string>& paths) {
  std::vector<ReplayEntry> all;
  for (const auto& p : paths) {
    auto e = load_replay(p);
    all.insert(all.end(), e.begin(), e.end());
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.t_ms < y.t_ms; });
  return all;
}

std::shared_ptr<const AnyModel> maybe_model(const std::string& path) {
  if (path.empty()) return nullptr;
  auto m = load_model_file(path);
  if (input_dim(m) != kFeatureDim) throw CliError(path + ": input width does not match the feature vector");
  return std::make_shared<const AnyModel>(std::move(m));
}

bool has_raw_imu(const std::vector<ReplayEntry>& e) {
  return std::any_of(e.begin(), e.end(), [](const auto& x) { return std::holds_alternative<ImuLine>(x.line); });
}

void write_report(std::ostream& os, std::span<const LatencyRecord> lat) {
  if (lat.empty()) {
    os << "events 0\n";
    return;
  }
  const auto r = latency_report(lat);
  auto row = [&](const char* name, const StageStats& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-9s mean %8.3f ms  std %8.3f ms  p95 %8.3f ms\n", name, s.mean, s.stddev, s.p95);
    os << buf;
  };
  os << "events " << r.count << '\n';
  row("classify", r.classify);
  row("dispatch", r.dispatch);
  row("total", r.total);
}

void write_logs(const fs::path& dir, std::span<const TrajectoryRow> traj, std::span<const JointStateRow> joints,
                std::span<const GestureEvent> events, std::span<const LatencyRecord> lat) {
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "trajectory.csv");
    write_trajectory_csv(f, traj);
  }
  {
    auto f = open_out(dir / "joints.csv");
    write_joint_header(f);
    for (const auto& r : joints) write_joint_row(f, r);
  }
  {
    auto f = open_out(dir / "events.csv");
    f << "id,label,confidence,status,plan\n";
    for (const auto& e : events) {
      f << e.id << ',' << to_string(e.label) << ',' << e.confidence << ',' << to_string(e.status) << ',';
      for (std::size_t i = 0; i < e.plan.size(); ++i) f << (i ? " " : "") << to_string(e.plan[i]);
      f << '\n';
    }
  }
  {
    auto f = open_out(dir / "latency.csv");
    f << "id,classify_ms,dispatch_ms,total_ms\n";
    for (const auto& r : lat) f << r.event_id << ',' << r.classify_ms << ',' << r.dispatch_ms << ',' << r.total_ms << '\n';
  }
  {
    auto f = open_out(dir / "latency_report.txt");
    write_report(f, lat);
  }
}

void print_summary(std::span<const TrajectoryRow> traj, std::span<const JointStateRow> joints,
                   std::span<const GestureEvent> events, std::size_t plans, double arm_dt) {
  const std::size_t busy = std::count_if(joints.begin(), joints.end(), [](const auto& r) { return r.segment.has_value(); });
  std::printf("ticks %zu\n", traj.size());
  if (!traj.empty()) {
    const auto& p = traj.back().pose;
    std::printf("final pose x %.4f y %.4f heading %.4f\n", p.x, p.y, p.heading);
  }
  std::printf("gesture events %zu, plans started %zu, arm busy %.2f s\n", events.size(), plans,
              static_cast<double>(busy) * arm_dt);
  if (!joints.empty()) {
    const auto& last = joints.back();
    std::printf("arm %s\n", last.segment ? ("moving to " + std::string(to_string(*last.segment))).c_str() : "idle");
  }
}

int cmd_replay(const RunArgs& a) {
  const auto entries = merged_replays(a.replay);
  const auto model = maybe_model(a.model);
  if (!model && has_raw_imu(entries)) throw CliError("replay holds raw IMU lines; pass --model");
  const auto cfg = session_config(a);
  const auto log = replay_session(entries, cfg, model,
                                  a.duration >= 0.0 ? std::optional<double>(a.duration) : std::nullopt,
                                  entries.empty() ? 0.0 : a.settle);
  write_logs(a.out, log.trajectory, log.joints, log.events, log.latency);
  print_summary(log.trajectory, log.joints, log.events, log.plans_started, cfg.right.arm_dt);
  LOG_INFO("logs in ", a.out);
  return 0;
}

std::atomic<bool> g_interrupted{false};

int cmd_sim(const RunArgs& a) {
  const auto entries = merged_replays(a.replay);
  const auto model = maybe_model(a.model);
  if (!model && has_raw_imu(entries)) throw CliError("replay holds raw IMU lines; pass --model");
  double duration = a.duration;
  if (duration < 0.0) {
    if (a.cockpit) throw CliError("--duration is required with --cockpit");
    duration = entries.empty() ? 0.0 : entries.back().t_ms / 1000.0 + a.settle;
  }
  const auto cfg = session_config(a);
  Bus bus;
  TeleopSession session(cfg, model, bus);
  std::unique_ptr<CockpitServer> server;
  if (a.cockpit) {
    server = std::make_unique<CockpitServer>(session, bus, a.port);
    LOG_INFO("cockpit websocket on ws://127.0.0.1:", server->port(), "/");
  }
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  session.start();
  if (server) server->start();
  const auto t0 = SteadyClock::now();
  const auto end = t0 + std::chrono::duration_cast<SteadyClock::duration>(std::chrono::duration<double>(duration));
  for (const auto& e : entries) {
    const auto at = t0 + std::chrono::duration_cast<SteadyClock::duration>(std::chrono::duration<double, std::milli>(e.t_ms));
    if (at >= end || g_interrupted) break;
    std::this_thread::sleep_until(at);
    session.push_line(e.line);
  }
  while (SteadyClock::now() < end && !g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  if (server) server->stop();
  session.stop();
  write_logs(a.out, session.trajectory(), session.joints(), session.events(), session.latency());
  print_summary(session.trajectory(), session.joints(), session.events(), session.plans_started(), cfg.right.arm_dt);
  LOG_INFO("logs in ", a.out);
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string dir = "run";
  bool speed_profile = false;
};

std::vector<std::vector<double>> read_numeric_csv(const fs::path& p, std::size_t cols) {
  std::ifstream in(p);
  if (!in) throw CliError("cannot open " + p.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (r.size() < cols && std::getline(ss, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw CliError(p.string() + ":" + std::to_string(n) + ": bad number '" + cell + "'");
      }
    }
    if (r.size() != cols) throw CliError(p.string() + ":" + std::to_string(n) + ": too few fields");
    rows.push_back(std::move(r));
  }
  return rows;
}

int cmd_report(const ReportArgs& a) {
  const fs::path dir(a.dir);
  std::vector<LatencyRecord> lat;
  for (const auto& r : read_numeric_csv(dir / "latency.csv", 4))
    lat.push_back({static_cast<std::uint64_t>(r[0]), r[1], r[2], r[3]});
  write_report(std::cout, lat);
  if (!a.speed_profile) return 0;
  std::vector<TrajectoryRow> traj;
  for (const auto& r : read_numeric_csv(dir / "trajectory.csv", 6))
    traj.push_back({r[0], {r[1], r[2], r[3]}, {r[4], r[5]}});
  const auto check = check_speed_profile(traj);
  for (const auto& p : check.phases)
    std::printf("%-14s %4.1f-%4.1f s  min %.3f  max %.3f  end %.3f  %s\n", p.name.c_str(), p.from_s, p.to_s, p.min_v,
                p.max_v, p.end_v, p.ok ? "ok" : "MISMATCH");
  if (!check.ok()) throw CliError("speed profile does not match the expected phases");
  return 0;
}

// ---------------------------------------------------------------------------
// script

struct ScriptArgs {
  std::string kind;
  std::string out;
  std::string duration = "10s";
  std::uint64_t seed = 11;
};

int cmd_script(const ScriptArgs& a) {
  require(a.kind, "kind");
  require(a.out, "out");
  auto f = open_out(a.out);
  if (a.kind == "speed-profile") {
    f << "# left glove: level, tilt forward with 8 index bends, 7 middle bends, level\n";
    f << "# run with --flex-debounce-ms 150\n";
    write_replay(f, speed_profile_script());
  } else if (a.kind == "gestures") {
    f << "# up-down then to-fro; run with --arm-start place\n";
    auto steps = homing_then_pickup_script();
    steps.push_back({11000.0, RightLine{GestureClass::idle, 0.99}});  // keeps the run going until pickup is reached
    write_replay(f, steps);
  } else if (a.kind == "idle") {
    f << "# raw right-glove idle stream with a level left glove; needs --model\n";
    write_replay(f, idle_script(parse_duration_ms(a.duration), a.seed));
  } else if (a.kind == "drive-and-grab") {
    f << "# both hands: drive forward and turn while the arm runs circle then up-down\n";
    write_replay(f, drive_and_grab_script());
  } else if (a.kind == "poses") {
    PoseLibrary::defaults().write(f);
  } else {
    throw CliError("unknown script kind '" + a.kind + "' (speed-profile, gestures, idle, drive-and-grab, poses)");
  }
  LOG_INFO("wrote ", a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bimanual gesture teleoperation tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "duohand 1.0");
  app.footer("Environment: DUOHAND_LOG=quiet|info|debug (default info). Config files hold key=value lines "
             "named after the long options; command-line flags take precedence.");

  std::map<CLI::App*, std::string> configs;
  std::map<CLI::App*, bool> dumps;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", configs[sub], "key=value file with option defaults");
    sub->add_flag("--dump-config", dumps[sub], "print the effective options as key=value and exit");
  };

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "generate synthetic train.csv and test.csv");
  g->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
  g->add_option("--per-class", gen.per_class, "recording length per class for train.csv")->capture_default_str();
  g->add_option("--test-per-class", gen.test_per_class, "recording length per class for test.csv")->capture_default_str();
  g->add_option("--noise", gen.noise, "accelerometer noise sigma in g")->capture_default_str();
  g->add_option("--out", gen.out, "output directory")->capture_default_str();
  common(g);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the float classifier");
  t->add_option("--data", tr.data, "dataset CSV");
  t->add_option("--model", tr.model, "output model file")->capture_default_str();
  t->add_option("--metrics", tr.metrics, "per-epoch metrics CSV")->capture_default_str();
  t->add_option("--epochs", tr.epochs)->capture_default_str();
  t->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str();
  t->add_option("--val", tr.val, "validation fraction")->capture_default_str();
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("--hop-ms", tr.hop_ms, "window hop when cutting the dataset")->capture_default_str();
  common(t);

  QuantArgs qa;
  auto* q = app.add_subcommand("quantize", "convert a float model to int8");
  q->add_option("--model", qa.model, "float model file");
  q->add_option("--data", qa.data, "calibration dataset CSV");
  q->add_option("--out", qa.out, "output model file")->capture_default_str();
  common(q);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "confusion matrix of a model on a dataset");
  e->add_option("--model", ev.model, "model file (float or int8)");
  e->add_option("--data", ev.data, "dataset CSV");
  e->add_option("--csv", ev.csv, "also write the matrix as CSV");
  common(e);

  RunArgs rep, sim;
  auto run_options = [&](CLI::App* sub, RunArgs& r) {
    sub->add_option("--replay", r.replay, "replay file, repeatable")->check(CLI::ExistingFile);
    sub->add_option("--model", r.model, "classifier for raw IMU lines");
    sub->add_option("--poses", r.poses, "pose file");
    sub->add_option("--out", r.out, "log directory")->capture_default_str();
    sub->add_option("--arm-start", r.arm_start, "pose the arm starts at")->capture_default_str();
    sub->add_option("--duration", r.duration, "run length in seconds (default: last entry + settle)");
    sub->add_option("--settle", r.settle, "seconds to keep running after the last entry")->capture_default_str();
    sub->add_option("--flex-debounce-ms", r.flex_debounce_ms)->capture_default_str();
    sub->add_option("--flex-threshold", r.flex_threshold)->capture_default_str();
    sub->add_option("--tilt-threshold", r.tilt_threshold, "degrees")->capture_default_str();
    sub->add_option("--dead-zone", r.dead_zone, "degrees")->capture_default_str();
    sub->add_option("--alpha", r.alpha, "low-pass coefficient")->capture_default_str();
    sub->add_option("--confidence", r.confidence, "dispatch threshold")->capture_default_str();
    sub->add_option("--input-timeout-ms", r.input_timeout_ms, "stop the base after this long without input")
        ->capture_default_str();
    common(sub);
  };
  auto* rp = app.add_subcommand("replay", "deterministic replay on a virtual clock");
  run_options(rp, rep);
  auto* sm = app.add_subcommand("sim", "real-time session, optionally with the cockpit websocket");
  run_options(sm, sim);
  sm->add_flag("--cockpit", sim.cockpit, "serve the cockpit websocket on 127.0.0.1");
  sm->add_option("--port", sim.port, "cockpit port (0 picks a free one)")->capture_default_str();

  ReportArgs ra;
  auto* r = app.add_subcommand("report", "latency statistics of a run directory");
  r->add_option("--dir", ra.dir, "run directory")->capture_default_str();
  r->add_flag("--speed-profile", ra.speed_profile, "also check the trajectory against the speed-modulation phases");
  common(r);

  ScriptArgs sa;
  auto* s = app.add_subcommand("script", "write a sample replay or pose file");
  s->add_option("kind", sa.kind, "speed-profile, gestures, idle, drive-and-grab or poses");
  s->add_option("--out", sa.out, "output file");
  s->add_option("--duration", sa.duration, "idle stream length")->capture_default_str();
  s->add_option("--seed", sa.seed)->capture_default_str();
  common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cout.flush();
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  }

  try {
    init_log();
    CLI::App* sub = app.get_subcommands().front();
    if (!configs[sub].empty()) apply_config(*sub, configs[sub]);
    if (dumps[sub]) {
      dump_config(*sub);
      return 0;
    }
    if (sub == g) return cmd_gen(gen);
    if (sub == t) return cmd_train(tr);
    if (sub == q) return cmd_quantize(qa);
    if (sub == e) return cmd_eval(ev);
    if (sub == rp) return cmd_replay(rep);
    if (sub == sm) return cmd_sim(sim);
    if (sub == r) return cmd_report(ra);
    if (sub == s) return cmd_script(sa);
  } catch (const std::exception& ex) {
    std::string msg = ex.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cout.flush();
    std::cerr << "error: " << msg << '\n';
    return 1;
  }
  return 1;
}
