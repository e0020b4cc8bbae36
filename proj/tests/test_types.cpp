#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include "platoon/types.hpp"

using namespace platoon;

TEST_CASE("zero-width measurement is degenerate") {
  for (std::uint64_t seed : {0u, 1u, 99u}) {
    const Interval i = interval_measure(25.0, 0.0, seed);
    CHECK(i.lo == 25.0);
    CHECK(i.hi == 25.0);
  }
}

TEST_CASE("measurement widths from the evaluation setup") {
  const Interval pos = interval_measure(100.0, 0.4, std::uint64_t{7});
  CHECK(pos.contains(100.0));
  CHECK(pos.width() <= 0.4 + 1e-12);

  const Interval vel = interval_measure(0.0, 0.1, std::uint64_t{3});
  CHECK(vel.contains(0.0));
  CHECK(vel.width() <= 0.1 + 1e-12);
}

TEST_CASE("measurement is deterministic for a fixed seed") {
  CHECK(interval_measure(12.5, 0.4, std::uint64_t{42}) == interval_measure(12.5, 0.4, std::uint64_t{42}));
}

TEST_CASE("property: generated intervals contain the true value") {
  Rng rng(2024);
  std::uniform_real_distribution<double> value(-1e4, 1e4);
  std::uniform_real_distribution<double> width(0.0, 2.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = value(rng);
    const double w = width(rng);
    const Interval m = interval_measure(x, w, rng);
    REQUIRE(m.contains(x));
    REQUIRE(m.width() <= w + 1e-9);
  }
}

TEST_CASE("property: interval sum, min and max preserve containment") {
  Rng rng(7);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> wd(0.0, 5.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng);
    const double y = u(rng);
    const Interval X = interval_measure(x, wd(rng), rng);
    const Interval Y = interval_measure(y, wd(rng), rng);
    REQUIRE((X + Y).contains(x + y));
    REQUIRE((X - Y).contains(x - y));
    REQUIRE(min(X, Y).contains(std::min(x, y)));
    REQUIRE(max(X, Y).contains(std::max(x, y)));
  }
}

TEST_CASE("vehicle presets follow the parameter table") {
  const auto p0 = presets::p0();
  CHECK(p0.a_dec == -5.0);
  CHECK(p0.mass == 20000.0);
  CHECK(p0.length == 16.0);
  const auto p4 = presets::p4();
  CHECK(p4.a_dec == -9.0);
  CHECK(p4.a_acc == 3.5);
  CHECK(p4.v_max == 50.0);
  const auto wc = presets::worst_case();
  CHECK(wc.a_dec == -12.0);
  CHECK(wc.mass == 400.0);
  CHECK(wc.drag_coeff == 2.0);
  CHECK(wc.frontal_area == 12.5);
  CHECK(presets::by_name("p3")->a_dec == -5.5);
  CHECK_FALSE(presets::by_name("p9").has_value());
  for (const auto& p : {presets::p0(), presets::p1(), presets::p2(), presets::p3(), presets::p4(),
                        presets::worst_case()})
    CHECK_NOTHROW(validate(p));
}

TEST_CASE("parameter validation rejects inconsistent values") {
  VehicleParams p = presets::p0();
  p.a_dec = 1.0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p = presets::p0();
  p.mass = 0.0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);

  EnvParams env;
  CHECK_NOTHROW(validate(env));
  env.w = {0.1, 0.2};
  CHECK_THROWS_AS(validate(env), std::invalid_argument);
  env = EnvParams{};
  env.a_dec_cutin = 1.0;
  CHECK_THROWS_AS(validate(env), std::invalid_argument);
}

TEST_CASE("environment defaults match the evaluation table") {
  const EnvParams env;
  CHECK(env.rho == Interval{1.1, 1.3});
  CHECK(env.v_wind == Interval{1.4, 4.2});
  CHECK(env.alpha == Interval{-0.06, 0.06});
  CHECK(env.w == Interval{-0.1, 0.1});
  CHECK(env.s_sensor == 200.0);
  CHECK(env.t_clear == 4.0);
  CHECK(env.dt_p == 0.1);
  CHECK(env.a_dec_cutin == -1.0);
}

TEST_CASE("cut-in tracker clearing time") {
  CutinTracker tr = CutinTracker::start(10.0, -1.0);
  CHECK(tr.remaining(10.0, 4.0) == doctest::Approx(4.0));
  CHECK(tr.remaining(12.5, 4.0) == doctest::Approx(1.5));
  CHECK(tr.remaining(20.0, 4.0) == 0.0);
  CHECK(tr.assumed_limit(-1.0) == -1.0);
  tr.a_min_observed = -3.0;
  CHECK(tr.assumed_limit(-1.0) == -3.0);
  tr.cleared = true;
  CHECK(tr.remaining(11.0, 4.0) == 0.0);
}

TEST_CASE("incline profile interpolation and range") {
  const InclineProfile prof({{0.0, 0.0}, {100.0, 0.04}, {200.0, -0.02}});
  CHECK(prof.at(-5.0) == 0.0);
  CHECK(prof.at(50.0) == doctest::Approx(0.02));
  CHECK(prof.at(150.0) == doctest::Approx(0.01));
  CHECK(prof.at(500.0) == doctest::Approx(-0.02));
  const Interval r = prof.range({50.0, 180.0});
  CHECK(r.lo == doctest::Approx(prof.at(180.0)));
  CHECK(r.hi == doctest::Approx(0.04));
  CHECK_THROWS_AS(InclineProfile({{1.0, 0.0}, {1.0, 0.1}}), std::invalid_argument);
}
