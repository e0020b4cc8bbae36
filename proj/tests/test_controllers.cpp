#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "platoon/controllers.hpp"

using namespace platoon;

namespace {

PrecedingInfo vehicle_at(double front, double v, const VehicleParams& p, double a_min) {
  PrecedingInfo pr;
  pr.id = 1;
  pr.params = p;
  pr.a_min_assumed = a_min;
  pr.meas = IntervalState::exact({front, v});
  return pr;
}

bool verify_safe(double a, const LimitSequence& lim, const IntervalState& ego, const VehicleParams& p,
                 const EnvParams& env) {
  return plan_safe(InputPlan::hold_then_brake(a), lim, ego, p.a_dec, p, env);
}

}  // namespace

TEST_CASE("nominal controller") {
  const VehicleParams p = presets::p2();
  NominalGains g;
  g.k_p = 1.0;
  const IntervalState ego = IntervalState::exact({0.0, 20.0});
  const double eq_gap = g.headway * 20.0 + g.d_standstill;
  PrecedingInfo pred = vehicle_at(eq_gap + 4.2, 20.0, presets::p4(), -9.0);
  CHECK(nominal_cacc(ego, &pred, 30.0, p, g) == doctest::Approx(0.0));
  pred.meas.s = Interval::point(eq_gap + 4.2 - 1.0);
  CHECK(nominal_cacc(ego, &pred, 30.0, p, g) == doctest::Approx(-1.0));
  CHECK(nominal_cacc(ego, nullptr, 25.0, p, g) == doctest::Approx(4.0));
  CHECK(nominal_cacc(ego, nullptr, 25.0, presets::p0(), g) == doctest::Approx(1.0));
  pred.meas.s = Interval::point(1.0);
  CHECK(nominal_cacc(ego, &pred, 30.0, p, g) == p.a_dec);
}

TEST_CASE("fail-safe on an open road returns the top of the bracket") {
  const EnvParams env;
  const VehicleParams p = presets::p2();
  const IntervalState ego = IntervalState::exact({0.0, 10.0});
  const LimitSequence lim(ego.s.lo + env.s_sensor);
  const FailSafeConfig cfg = default_bracket(ego, p.a_dec, p, env);
  const auto a = fail_safe(lim, ego, p.a_dec, p, env, cfg);
  REQUIRE(a.has_value());
  CHECK(*a == doctest::Approx(cfg.a_search_hi - cfg.a_tol));
}

TEST_CASE("fail-safe reports no safe input in front of a close obstacle") {
  const EnvParams env;
  const VehicleParams p = presets::p2();
  const IntervalState ego = IntervalState::exact({0.0, 20.0});
  const LimitSequence lim(5.0);
  CHECK_FALSE(fail_safe(lim, ego, p.a_dec, p, env, default_bracket(ego, p.a_dec, p, env)).has_value());
}

TEST_CASE("fail-safe just beyond the full-brake stop is harsh and minimal") {
  const EnvParams env;
  const VehicleParams p = presets::p0();
  const IntervalState ego{{0.0, 0.4}, {20.0, 20.1}};
  const double stop = upper_pos(ego, InputPlan::full_brake(), p.a_dec, p, env).final_position();
  const LimitSequence lim(stop + 0.05);
  const FailSafeConfig cfg = default_bracket(ego, p.a_dec, p, env);
  const auto a = fail_safe(lim, ego, p.a_dec, p, env, cfg);
  REQUIRE(a.has_value());
  // inputs below the best-case braking limit act as full braking on the upper bound
  const double brake = bound_accel_limits(BoundKind::Upper, 0.0, ego, p, env, p.a_dec).a_min;
  CHECK(*a < brake + 0.1);
  CHECK(verify_safe(*a, lim, ego, p, env));
  CHECK_FALSE(verify_safe(*a + 2 * cfg.a_tol, lim, ego, p, env));
}

TEST_CASE("anytime search only ever exposes safe inputs") {
  const EnvParams env;
  const VehicleParams p = presets::p1();
  const IntervalState ego{{0.0, 0.4}, {22.0, 22.1}};
  const LimitSequence lim(60.0);
  const FailSafeConfig cfg = default_bracket(ego, p.a_dec, p, env);
  FailSafeSearch s(lim, ego, p.a_dec, p, env, cfg);
  while (s.step())
    if (s.best()) REQUIRE(verify_safe(*s.best(), lim, ego, p, env));
  REQUIRE(s.best().has_value());
  CHECK(verify_safe(*s.best(), lim, ego, p, env));
  const double range = cfg.a_search_hi - cfg.a_search_lo;
  CHECK(s.evaluations() <= 2 + static_cast<int>(std::ceil(std::log2(range / cfg.a_tol))));
}

TEST_CASE("property: fail-safe outputs are safe and minimal") {
  const EnvParams env;
  Rng rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const VehicleParams ps[] = {presets::p0(), presets::p1(), presets::p2(), presets::p3(), presets::p4()};
  int found = 0;
  for (int i = 0; i < 150; ++i) {
    const VehicleParams& p = ps[i % 5];
    const double v = u(rng) * 28.0;
    const IntervalState ego{{0.0, 0.4}, {v, v + 0.1}};
    const PrecedingInfo pred = vehicle_at(5.0 + 80.0 * u(rng), 25.0 * u(rng), ps[(i + 2) % 5], ps[(i + 2) % 5].a_dec);
    const LimitSequence lim = limit_sequence({pred}, {}, ego, env);
    const FailSafeConfig cfg = default_bracket(ego, p.a_dec, p, env);
    const auto a = fail_safe(lim, ego, p.a_dec, p, env, cfg);
    REQUIRE(a.has_value() == verify_safe(cfg.a_search_lo, lim, ego, p, env));
    if (!a) continue;
    ++found;
    REQUIRE(verify_safe(*a, lim, ego, p, env));
    REQUIRE((*a + 2 * cfg.a_tol > cfg.a_search_hi || !verify_safe(*a + 2 * cfg.a_tol, lim, ego, p, env)));
  }
  CHECK(found > 50);
}

TEST_CASE("recap leaves a far, faster cut-in alone") {
  const EnvParams env;
  const VehicleParams p = presets::p1();
  const IntervalState ego{{0.0, 0.4}, {20.0, 20.1}};
  PrecedingInfo c = vehicle_at(150.0, 25.0, presets::worst_case(), -12.0);
  c.cutin = CutinAssumption{-1.0, 4.0};
  const RecapPlan plan = recap(ego, c, 4.0, 0.5, p.a_dec, p, env);
  REQUIRE(plan.feasible);
  REQUIRE(plan.inputs.size() == 40);
  CHECK(plan.inputs[0] == doctest::Approx(0.5));
  CHECK(plan.objective == doctest::Approx(0.0));
}

TEST_CASE("recap at the boundary brakes at once") {
  const EnvParams env;
  const VehicleParams p = presets::p1();
  const IntervalState ego{{0.0, 0.4}, {20.0, 20.1}};
  PrecedingInfo c = vehicle_at(0.0, 10.0, presets::worst_case(), -12.0);
  c.cutin = CutinAssumption{-1.0, 4.0};
  const auto pred = preceding_bound(c, env);
  // place the cut-in where only the harshest plan keeps the ego behind it, plus a small slack
  const auto brake = upper_pos(ego, InputPlan::full_brake(), p.a_dec, p, env);
  double need = -kInf;
  for (std::size_t k = 0; k + 1 < std::max(brake.size(), pred.size() + 1); ++k)
    need = std::max(need, brake.at(k + 1) - pred.at(k));
  c.meas.s = c.meas.s + (need + 0.08);
  const RecapPlan plan = recap(ego, c, 4.0, 0.0, p.a_dec, p, env);
  REQUIRE(plan.feasible);
  CHECK(plan.inputs[0] < bound_accel_limits(BoundKind::Upper, 0.0, ego, p, env, p.a_dec).a_min + 0.5);
  LimitSequence lim;
  lim.include(preceding_bound(c, env));
  CHECK(stays_behind(upper_pos(ego, plan.plan(), p.a_dec, p, env), lim));
}

TEST_CASE("recap with no clearing time left is the full-brake check") {
  const EnvParams env;
  const VehicleParams p = presets::p1();
  const IntervalState ego{{0.0, 0.4}, {20.0, 20.1}};
  PrecedingInfo c = vehicle_at(60.0, 15.0, presets::worst_case(), -12.0);
  const RecapPlan plan = recap(ego, c, 0.0, 0.0, p.a_dec, p, env);
  CHECK(plan.inputs.empty());
  LimitSequence lim;
  lim.include(preceding_bound(c, env));
  CHECK(plan.feasible == stays_behind(upper_pos(ego, InputPlan::full_brake(), p.a_dec, p, env), lim));
}

TEST_CASE("property: recap plans are feasible, non-increasing and beat the constant plan") {
  const EnvParams env;
  Rng rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int feasible = 0;
  for (int i = 0; i < 40; ++i) {
    const VehicleParams p = i % 2 ? presets::p1() : presets::p4();
    const double v = 10.0 + 15.0 * u(rng);
    const IntervalState ego{{0.0, 0.4}, {v, v + 0.1}};
    PrecedingInfo c = vehicle_at(15.0 + 40.0 * u(rng), v * u(rng), presets::worst_case(), -12.0);
    const double remaining = 4.0 * u(rng);
    c.cutin = CutinAssumption{-1.0, remaining};
    const RecapPlan plan = recap(ego, c, remaining, 0.0, p.a_dec, p, env);
    if (!plan.feasible) continue;
    ++feasible;
    LimitSequence lim;
    lim.include(preceding_bound(c, env));
    REQUIRE(stays_behind(upper_pos(ego, plan.plan(), p.a_dec, p, env), lim));
    REQUIRE(plan.plan().non_increasing());
    if (plan.inputs.empty()) continue;
    // oracle: best constant plan by an independent bisection, with the same back-off
    const LimitSequence backed = lim.offset(-0.05);
    const FailSafeConfig br = default_bracket(ego, p.a_dec, p, env);
    auto ok = [&](double a) {
      return stays_behind(upper_pos(ego, {std::vector<double>(plan.inputs.size(), a), -kInf}, p.a_dec, p, env),
                          backed);
    };
    if (!ok(br.a_search_lo)) continue;
    double lo = br.a_search_lo;
    double hi = std::max(lo, std::min(0.0, br.a_search_hi));
    if (ok(hi)) lo = hi;
    while (hi - lo > 0.01) {
      const double mid = 0.5 * (lo + hi);
      (ok(mid) ? lo : hi) = mid;
    }
    REQUIRE(plan.objective <= recap_objective(std::vector<double>(plan.inputs.size(), lo), 0.0) + 1e-9);
  }
  CHECK(feasible > 10);
}
