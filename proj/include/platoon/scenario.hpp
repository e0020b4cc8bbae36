#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "platoon/controllers.hpp"
#include "platoon/network.hpp"
#include "platoon/types.hpp"

namespace platoon {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VehicleSpec {
  std::string name;
  VehicleParams params;
  VehicleState init;
  bool member{true};
  double target_speed{20.0};
};

enum class EventType { FullBrake, Depart, CutIn, SetTarget, HoldAccel };

struct Event {
  double t{0.0};
  EventType type{EventType::FullBrake};
  std::string vehicle;  // subject; the new vehicle's name for cut-ins
  double value{0.0};    // target speed or held acceleration
  // cut-in only
  std::string ahead_of;
  double gap{0.0};      // rear of the new vehicle to the front of `ahead_of`
  double v{0.0};
  VehicleParams params;
};

struct NoiseConfig {
  double position_width{0.4};
  double velocity_width{0.1};
};

/// Actual road conditions; unset values are drawn from the env intervals per run.
struct RoadConfig {
  std::optional<double> rho;
  std::optional<double> v_wind;
  double alpha{0.0};
  std::optional<std::vector<std::pair<double, double>>> incline_profile;
  bool route_aware{false};  // bounds use the profile's local incline range
};

struct Scenario {
  EnvParams env;
  RoadConfig road;
  NoiseConfig noise;
  ChannelConfig channel;
  bool channel_seed_set{false};
  NominalGains controller;
  bool consensus{false};
  bool log_safe_distance{false};
  double duration{30.0};
  std::uint64_t seed{1};
  std::vector<VehicleSpec> vehicles;
  std::vector<Event> events;
};

/// Throws ScenarioError naming the offending field (and line when parsed from text).
void validate(const Scenario& sc);

Scenario load_scenario_file(const std::string& path);
Scenario parse_scenario(const std::string& yaml_text, const std::string& origin = "<string>");

}  // namespace platoon
