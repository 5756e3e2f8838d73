#include <catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "duohand/protocol.hpp"

using namespace duohand;

namespace {

double q3(std::mt19937_64& rng, double limit) {
  std::uniform_int_distribution<long> u(static_cast<long>(-limit * 1000), static_cast<long>(limit * 1000));
  return static_cast<double>(u(rng)) / 1000.0;
}

WireLine random_line(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 2), flex(0, 1023), cls(0, 6);
  switch (kind(rng)) {
    case 0: {
      LeftLine l;
      for (auto& v : l.acc) v = q3(rng, kAccRangeG);
      l.flex_index = flex(rng);
      l.flex_middle = flex(rng);
      return l;
    }
    case 1: {
      std::uniform_int_distribution<int> c(0, 1000);
      return RightLine{static_cast<GestureClass>(cls(rng)), c(rng) / 1000.0};
    }
    default: {
      ImuLine m;
      for (auto& v : m.acc) v = q3(rng, kAccRangeG);
      for (auto& v : m.gyr) v = q3(rng, kGyrRangeDps);
      for (auto& v : m.mag) v = q3(rng, 100.0);
      return m;
    }
  }
}

}  // namespace

TEST_CASE("parse examples") {
  const auto l = parse_line("L,0.010,-0.020,0.998,512,488");
  REQUIRE(std::holds_alternative<LeftLine>(l));
  CHECK(std::get<LeftLine>(l) == LeftLine{{0.01, -0.02, 0.998}, 512, 488});

  const auto r = parse_line("R,circle,0.930\r\n");
  REQUIRE(std::holds_alternative<RightLine>(r));
  CHECK(std::get<RightLine>(r) == RightLine{GestureClass::circle, 0.93});

  CHECK_THROWS_AS(parse_line("R,wave,0.9"), RangeError);
  try {
    parse_line("R,wave,0.9");
  } catch (const RangeError& e) {
    CHECK(e.field() == "label");
  }

  const auto m = parse_line("I,0.1,0.2,1.0,10,-20,30.5,20,-5,40");
  REQUIRE(std::holds_alternative<ImuLine>(m));
  CHECK(std::get<ImuLine>(m).gyr[2] == 30.5);
}

TEST_CASE("parse/format round trip under fuzzing") {
  std::mt19937_64 rng(12345);
  for (int i = 0; i < 10000; ++i) {
    const auto w = random_line(rng);
    const auto text = format_line(w);
    const auto back = parse_line(text);
    CHECK(back == w);
    CHECK(format_line(back) == text);
  }
}

TEST_CASE("malformed lines are rejected") {
  const std::vector<std::string> parse_errors = {
      "",
      "X,1,2",
      "L",
      "L,0.1,0.2,0.3,512",
      "L,0.1,0.2,0.3,512,488,7",
      "L,0.1,,0.3,512,488",
      "L,1e-3,0.2,0.3,512,488",
      "L,0.1,0.2,0.3,51.2,488",
      "L,0.1,0.2,0.3,-5,488",
      "L,.5,0.2,0.3,512,488",
      "L,0.,0.2,0.3,512,488",
      "L, 0.1,0.2,0.3,512,488",
      "L,nan,0.2,0.3,512,488",
      "R,circle",
      "R,circle,high",
      "R,circle,0.5,1",
      "l,0.1,0.2,0.3,512,488",
      "I,1,2,3",
  };
  for (const auto& s : parse_errors) {
    INFO(s);
    CHECK_THROWS_AS(parse_line(s), ParseError);
  }

  const std::vector<std::pair<std::string, std::string>> range_errors = {
      {"L,17.0,0.2,0.3,512,488", "ax"},
      {"L,0.1,0.2,0.3,1024,488", "f1"},
      {"L,0.1,0.2,0.3,512,99999999", "f2"},
      {"R,circle,1.001", "confidence"},
      {"R,wave,0.5", "label"},
      {"I,0,0,1,0,0,2500,0,0,0", "gz"},
  };
  for (const auto& [s, field] : range_errors) {
    INFO(s);
    try {
      parse_line(s);
      FAIL("accepted");
    } catch (const RangeError& e) {
      CHECK(e.field() == field);
    }
  }

  try {
    parse_line("L,0.1,0.2,0.x,512,488");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 12);
  }
}

TEST_CASE("random garbage never crashes the parser") {
  std::mt19937_64 rng(9);
  const std::string alphabet = "LRI,.-0123456789 aeiz\t";
  std::uniform_int_distribution<std::size_t> len(0, 40), ch(0, alphabet.size() - 1);
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    const auto n = len(rng);
    for (std::size_t k = 0; k < n; ++k) s += alphabet[ch(rng)];
    try {
      const auto w = parse_line(s);
      CHECK(parse_line(format_line(w)) == w);
    } catch (const ParseError&) {
    } catch (const RangeError&) {
    }
  }
}

TEST_CASE("replay files") {
  std::istringstream is(
      "# header\n"
      "0 L,0.000,0.000,1.000,100,100\n"
      "\n"
      "250 R,up-down,0.950\n"
      "250 I,0.000,0.000,1.000,0.000,0.000,0.000,20.000,0.000,-40.000\n");
  const auto entries = read_replay(is);
  REQUIRE(entries.size() == 3);
  CHECK(entries[1].t_ms == 250);
  CHECK(std::get<RightLine>(entries[1].line).label == GestureClass::up_down);

  std::ostringstream os;
  write_replay(os, entries);
  std::istringstream again(os.str());
  const auto back = read_replay(again);
  REQUIRE(back.size() == entries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].t_ms == entries[i].t_ms);
    CHECK(back[i].line == entries[i].line);
  }

  std::istringstream empty("");
  CHECK(read_replay(empty).empty());

  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream s(text);
    try {
      read_replay(s);
    } catch (const ReplayError& e) {
      return e.line_no();
    }
    return 0;
  };
  CHECK(line_of("0 L,0,0,1,0,0\n10 R,jump,0.5\n") == 2);
  CHECK(line_of("10 L,0,0,1,0,0\n5 L,0,0,1,0,0\n") == 2);
  CHECK(line_of("\n\nL,0,0,1,0,0\n") == 3);
  CHECK(line_of("-5 L,0,0,1,0,0\n") == 1);
  CHECK(line_of("abc L,0,0,1,0,0\n") == 1);
}
