#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "platoon/scenario.hpp"

using namespace platoon;

namespace {

const char* kMinimal = R"(version: 1
duration: 12
seed: 7
vehicles:
  - {name: lead, preset: p2, s: 100, v: 20, member: false}
  - {name: ego, preset: p0, s: 50, v: 18, target: 22}
events:
  - {t: 5, type: full_brake, vehicle: lead}
)";

std::string error_of(const std::string& text) {
  try {
    parse_scenario(text, "case.yaml");
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal scenario parses with defaults") {
  const Scenario sc = parse_scenario(kMinimal);
  CHECK(sc.duration == 12.0);
  CHECK(sc.seed == 7);
  REQUIRE(sc.vehicles.size() == 2);
  CHECK(sc.vehicles[0].params == presets::p2());
  CHECK_FALSE(sc.vehicles[0].member);
  CHECK(sc.vehicles[0].target_speed == 20.0);
  CHECK(sc.vehicles[1].member);
  CHECK(sc.vehicles[1].target_speed == 22.0);
  CHECK(sc.env.dt_p == 0.1);
  CHECK(sc.noise.position_width == 0.4);
  REQUIRE(sc.events.size() == 1);
  CHECK(sc.events[0].type == EventType::FullBrake);
  CHECK_FALSE(sc.consensus);
}

TEST_CASE("overrides and sections") {
  const Scenario sc = parse_scenario(R"(version: 1
env: {w: [-0.2, 0.1], t_clear: 3}
road: {rho: 1.2, incline_profile: [[0, 0], [100, 0.03]]}
channel: {drop: 0.3, delay: [0, 10], seed: 9}
consensus: {enabled: true}
vehicles:
  - {name: a, preset: p1, s: 0, v: 10, overrides: {a_dec: -4.5, length: 12}}
events:
  - {t: 1, type: cut_in, name: c, ahead_of: a, gap: 10, v: 9, preset: p4}
  - {t: 2, type: hold_accel, vehicle: c, a: -0.5}
)");
  CHECK(sc.env.w == Interval{-0.2, 0.1});
  CHECK(sc.env.t_clear == 3.0);
  CHECK(*sc.road.rho == 1.2);
  CHECK(sc.road.incline_profile->size() == 2);
  CHECK(sc.channel.drop_prob == 0.3);
  CHECK(sc.channel.delay_max == 10);
  CHECK(sc.channel_seed_set);
  CHECK(sc.consensus);
  CHECK(sc.vehicles[0].params.a_dec == -4.5);
  CHECK(sc.vehicles[0].params.length == 12.0);
  CHECK(sc.events[0].type == EventType::CutIn);
  CHECK(sc.events[0].params == presets::p4());
  CHECK(sc.events[1].value == -0.5);
}

TEST_CASE("errors name the field and line") {
  std::string bad = kMinimal;
  bad.replace(bad.find("duration"), 8, "durration");
  const std::string e1 = error_of(bad);
  CHECK(e1.find("durration") != std::string::npos);
  CHECK(e1.find("case.yaml:2") != std::string::npos);

  const std::string e2 = error_of(R"(version: 1
vehicles:
  - {name: a, preset: p9, s: 0, v: 10}
)");
  CHECK(e2.find("case.yaml:3") != std::string::npos);
  CHECK(e2.find("p9") != std::string::npos);

  CHECK(error_of("version: 2\nvehicles: []\n").find("version") != std::string::npos);
  CHECK(error_of("version: 1\nvehicles:\n  - {name: a, s: x}\n").find("'s'") != std::string::npos);
  CHECK(error_of("version: 1\nenv: {w: [0.1, -0.1]}\nvehicles:\n  - {name: a, s: 0}\n").find("env.w") !=
        std::string::npos);
  CHECK(error_of("version: 1\nvehicles: [\n").find("case.yaml:") != std::string::npos);
}

TEST_CASE("invalid placements and references are rejected") {
  CHECK(error_of(R"(version: 1
vehicles:
  - {name: a, preset: p0, s: 100, v: 10}
  - {name: b, preset: p0, s: 90, v: 10}
)").find("overlap") != std::string::npos);
  CHECK(error_of(R"(version: 1
vehicles:
  - {name: a, preset: p0, s: 100, v: 10}
  - {name: a, preset: p0, s: 50, v: 10}
)").find("duplicate") != std::string::npos);
  CHECK(error_of(R"(version: 1
vehicles:
  - {name: a, preset: p0, s: 100, v: 30}
)").find("v_max") != std::string::npos);
  CHECK(error_of(R"(version: 1
vehicles:
  - {name: a, preset: p0, s: 100, v: 10}
events:
  - {t: 1, type: depart, vehicle: z}
)").find("'z'") != std::string::npos);
  CHECK(error_of(R"(version: 1
road: {rho: 2.0}
vehicles:
  - {name: a, s: 0}
)").find("road.rho") != std::string::npos);
}

TEST_CASE("bundled scenarios load") {
  for (const char* f : {"scenario1.yaml", "scenario2.yaml", "cutin.yaml", "teleported_obstacle.yaml"}) {
    CAPTURE(f);
    CHECK_NOTHROW(load_scenario_file(std::string(PLATOON_SCENARIO_DIR) + "/" + f));
  }
  CHECK_THROWS_AS(load_scenario_file("/nonexistent.yaml"), ScenarioError);
}
