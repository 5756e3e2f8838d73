#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "duohand/drive_sim.hpp"

using namespace duohand;
using Catch::Approx;

namespace {

// Euler with many substeps, position advanced along the mid-substep heading.
Pose2D euler(Pose2D p, const Twist& tw, double duration, int substeps) {
  const double h = duration / substeps;
  double x = p.x, y = p.y, th = p.heading;
  for (int i = 0; i < substeps; ++i) {
    const double mid = th + 0.5 * tw.angular_z * h;
    x += tw.linear_x * std::cos(mid) * h;
    y += tw.linear_x * std::sin(mid) * h;
    th += tw.angular_z * h;
  }
  return {x, y, wrap_angle(th)};
}

}  // namespace

TEST_CASE("step examples") {
  auto p = step({}, {0.5, 0.0}, 2.0);
  CHECK(p.x == Approx(1.0));
  CHECK(p.y == 0.0);
  CHECK(p.heading == 0.0);

  p = step({}, {0.0, 0.5}, std::numbers::pi);
  CHECK(p.x == 0.0);
  CHECK(p.y == 0.0);
  CHECK(p.heading == Approx(std::numbers::pi / 2));

  p = step({}, {0.5, 0.5}, 2.0 * std::numbers::pi);  // half circle of radius 1
  CHECK(p.x == Approx(0.0).margin(1e-12));
  CHECK(p.y == Approx(2.0));
  CHECK(std::abs(p.heading) == Approx(std::numbers::pi));
}

TEST_CASE("arc integration matches a fine Euler oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> v(-1.0, 1.0), th(-3.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    const Twist tw{v(rng), v(rng)};
    const Pose2D start{v(rng), v(rng), th(rng)};
    Pose2D exact = start;
    for (int k = 0; k < 100; ++k) exact = step(exact, tw, 0.01);
    const auto ref = euler(start, tw, 1.0, 100000);
    CHECK(std::hypot(exact.x - ref.x, exact.y - ref.y) < 1e-6);
    CHECK(std::abs(wrap_angle(exact.heading - ref.heading)) < 1e-9);
  }
}

TEST_CASE("pose properties") {
  const Pose2D p{0.3, -0.2, 1.0};
  CHECK(step(p, {}, 0.7) == p);
  CHECK(step({}, {0.8, 0.0}, 3.0).x == Approx(2.4));

  // Rotating the initial heading rotates the trajectory.
  const Twist tw{0.6, -0.4};
  const double alpha = 0.9;
  Pose2D a{}, b{0, 0, alpha};
  for (int k = 0; k < 250; ++k) {
    a = step(a, tw, 0.01);
    b = step(b, tw, 0.01);
    const double rx = std::cos(alpha) * a.x - std::sin(alpha) * a.y;
    const double ry = std::sin(alpha) * a.x + std::cos(alpha) * a.y;
    CHECK(b.x == Approx(rx).margin(1e-12));
    CHECK(b.y == Approx(ry).margin(1e-12));
    CHECK(wrap_angle(b.heading - a.heading - alpha) == Approx(0.0).margin(1e-12));
  }

  // Halving dt leaves the final pose unchanged.
  Pose2D c{}, d{};
  for (int k = 0; k < 100; ++k) c = step(c, tw, 0.01);
  for (int k = 0; k < 200; ++k) d = step(d, tw, 0.005);
  CHECK(std::abs(c.x - d.x) < 1e-9);
  CHECK(std::abs(c.y - d.y) < 1e-9);
}

TEST_CASE("wrap_angle range") {
  CHECK(wrap_angle(std::numbers::pi) == Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == Approx(std::numbers::pi));
  CHECK(wrap_angle(3 * std::numbers::pi) == Approx(std::numbers::pi));
  for (double a = -20; a < 20; a += 0.37) {
    const double w = wrap_angle(a);
    CHECK(w > -std::numbers::pi);
    CHECK(w <= std::numbers::pi);
    CHECK(std::sin(w) == Approx(std::sin(a)).margin(1e-12));
  }
}

TEST_CASE("faults on bad input") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(step({}, {nan, 0}, 0.1), SimulationFault);
  CHECK_THROWS_AS(step({}, {0, INFINITY}, 0.1), SimulationFault);
  CHECK_THROWS_AS(step({}, {1, 0}, 0.0), SimulationFault);
  DriveSim sim;
  CHECK_THROWS_AS(sim.command({nan, 0}, 0), SimulationFault);
  CHECK_THROWS_AS(DriveSim(DriveSimConfig{0.0, 0.5}), SimulationFault);
}

TEST_CASE("run: empty stream, forward then stop, timeout") {
  const auto idle = run({}, 2.0);
  CHECK(idle.trajectory.size() == 201);
  CHECK(idle.trajectory.back().pose == Pose2D{});

  const std::vector<TimedTwist> fwd{{0.0, {0.5, 0}}, {0.4, {0.5, 0}}, {0.8, {0.5, 0}}, {1.0, {0, 0}}};
  const auto r = run(fwd, 2.0);
  CHECK(r.trajectory.back().pose.x == Approx(0.5).margin(0.5 * 0.01));
  CHECK(r.command_log.size() == 4);

  // A single command decays to a stop after the timeout.
  const std::vector<TimedTwist> once{{0.0, {1.0, 0}}};
  const auto t = run(once, 3.0);
  CHECK(t.trajectory.back().pose.x == Approx(0.51).margin(0.011));
  for (const auto& row : t.trajectory)
    if (row.t > 0.52) CHECK(row.applied.is_zero());
}

TEST_CASE("trajectory CSV") {
  const std::vector<TimedTwist> s{{0.0, {0.5, 0.1}}};
  const auto r = run(s, 0.05);
  std::ostringstream os;
  write_trajectory_csv(os, r.trajectory);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,x,y,heading,v_cmd,w_cmd");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 6);
}
