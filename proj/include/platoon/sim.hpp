#pragma once

#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "platoon/consensus.hpp"
#include "platoon/controllers.hpp"
#include "platoon/network.hpp"
#include "platoon/scenario.hpp"

namespace platoon {

/// Everything one protocol vehicle perceives at the start of a tick.
struct PlanningView {
  VehicleId self{-1};
  double t{0.0};
  long step{0};
  IntervalState ego;
  VehicleParams params;                      // own physical parameters
  double target_speed{20.0};
  std::optional<double> command;             // scripted override of the nominal input
  std::vector<PrecedingInfo> preceding;      // perceived vehicles ahead, nearest first
  std::optional<VehicleId> direct_pred;
  std::optional<VehicleId> direct_succ;
  std::vector<double> alerts;                // alerted collision positions
  const Mailbox* mailbox{nullptr};
};

/// Protocol state a vehicle carries from tick to tick.
struct ProtocolState {
  CouplingState coupling;
  ConsensusState consensus;
  std::unique_ptr<ConsensusEntity> entity;
  bool alert_outstanding{false};
  int withdraw_left{0};
  double last_applied_a{0.0};

  explicit ProtocolState(double a_min, std::unique_ptr<ConsensusEntity> e)
      : consensus(a_min), entity(std::move(e)) {}
};

struct PlanningConfig {
  NominalGains gains;
  RecapConfig recap;
  BoundOptions bound;
  double a_tol{0.05};
  int withdraw_repeats{20};
  bool check_invariants{true};
};

struct PlanningOutcome {
  double a_d{0.0};
  double nominal{0.0};
  bool fail_safe{false};
  bool recap{false};
  bool transition{false};
  bool spec_ok{true};              // full-brake check against the pairs outside clearing windows
  std::optional<double> s_coll;    // set when an alert was sent
  std::vector<Envelope> sends;     // receiver -1 means broadcast
};

/// One planning step of a protocol vehicle.
PlanningOutcome planning_step(const PlanningView& view, ProtocolState& st, const EnvParams& env,
                              const PlanningConfig& cfg = {});

/// Tightens the assumed cut-in limit to the observed braking and marks the
/// tracker cleared once the gap is verified safe.
CutinTracker cutin_update(CutinTracker tracker, double observed_a, bool gap_ok, double t);

struct StepRecord {
  long step{0};
  double t{0.0};
  VehicleId id{-1};
  std::string name;
  bool member{false};
  double s{0.0};
  double v{0.0};
  double a_applied{0.0};
  double a_d{0.0};
  double nominal{0.0};
  double a_min_forced{0.0};
  bool fail_safe{false};
  bool recap{false};
  bool transition{false};
  bool alert{false};
  int alerts_seen{0};
  bool spec_ok{true};
  double safe_distance{std::numeric_limits<double>::quiet_NaN()};
};

struct CollisionRecord {
  long step{0};
  double t{0.0};
  std::string follower;
  std::string leader;
};

struct Summary {
  long steps{0};
  double end_time{0.0};
  std::vector<CollisionRecord> collisions;
  std::map<std::pair<std::string, std::string>, double> min_gaps;  // (leader, follower)
  std::optional<double> convergence_time;   // first spread of member limits below 0.01
  std::optional<double> spread_before_departure;
  std::optional<double> forced_mean_before_departure;
  double spread_end{0.0};
  double forced_mean_end{0.0};
  long fail_safe_steps{0};
  std::optional<double> median_fail_safe_input;
  long recap_steps{0};
  long alerts{0};
  long spec_violations{0};
  double plan_ms_p99{0.0};
  double plan_ms_max{0.0};
  ConsensusStats consensus;
};

struct SimOptions {
  bool record_log{true};
  bool record_trace{true};
  PlanningConfig planning;
};

struct RunResult {
  std::vector<StepRecord> log;
  Summary summary;
  std::vector<TraceRecord> trace;
};

/// Runs the scenario until `duration` or the first collision.
RunResult run(const Scenario& sc, const SimOptions& opts = {});

void write_steps_csv(std::ostream& os, const std::vector<StepRecord>& log);
void write_summary_csv(std::ostream& os, const Summary& s);
void print_summary(std::ostream& os, const Summary& s);

}  // namespace platoon
