#pragma once

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "platoon/types.hpp"

namespace platoon {

/// A braking limit tagged with the step time at which its sender issued it.
struct LabelledLimit {
  double a{0.0};
  double label{-1.0};

  friend bool operator==(const LabelledLimit&, const LabelledLimit&) = default;
};

struct TransitionState {
  bool active{false};
  double a_trans{0.0};
  int c{-1};
  std::vector<double> jerk_seq{default_jerks()};

  static std::vector<double> default_jerks();
  double jerk(int k) const;
};

/// Upper bound on the next input while a verification keeps failing.
double transition_bound(TransitionState& ts, double last_applied_a, double dt_p);

struct ConsensusStats {
  long steps{0};
  long candidate_resets{0};  // candidate dropped by a non-stronger entity output
  long adoptions_weaker{0};
  long adoptions_confirmed{0};
  long transitions{0};
  long candidate_above_forced{0};
  long forced_weakened{0};
  long candidate_dropped_early{0};
  long unsafe_confirmation{0};
  long unsafe_forced_limit{0};
};

struct ConsensusState {
  double a_min_forced{-5.0};
  std::optional<double> a_cand;
  double t_accept{0.0};
  std::map<VehicleId, LabelledLimit> leader_limits;      // stored limit of each coupled leader
  std::map<VehicleId, LabelledLimit> follower_confirms;  // confirmations received from followers
  TransitionState transition;
  ConsensusStats stats;

  explicit ConsensusState(double a_min = -5.0) : a_min_forced(a_min) {}

  /// Newly coupled leaders start from the worst-case braking assumption.
  void add_leader(VehicleId l, double initial = -12.0) { leader_limits.try_emplace(l, LabelledLimit{initial, -1.0}); }
  void remove_leader(VehicleId l) { leader_limits.erase(l); }
  void remove_follower(VehicleId f) { follower_confirms.erase(f); }
};

/// Assumption about one preceding vehicle: its stored limit if coupled, otherwise
/// empty and the verifier applies its default assumption.
struct LimitAssumption {
  VehicleId id;
  std::optional<double> a_min;
};

/// Ego full-brake verification with ego limit `a_min_ego` against `preceding`.
using ConsensusVerify = std::function<bool(double a_min_ego, const std::vector<LimitAssumption>& preceding)>;

struct ConsensusInbox {
  std::map<VehicleId, LabelledLimit> leader_limits;  // newest BrakingLimit from each leader
  std::map<VehicleId, LabelledLimit> confirmations;  // newest Confirmation from each follower
};

struct ConsensusOutbox {
  std::vector<std::pair<VehicleId, LabelledLimit>> confirmations;  // to leaders
  LabelledLimit broadcast;                                          // to followers
};

struct ConsensusResult {
  double a_trans_bound{kInf};
  ConsensusOutbox outbox;
};

struct ConsensusStepInput {
  double t{0.0};
  std::vector<VehicleId> preceding;  // X
  std::vector<VehicleId> leaders;    // L
  std::vector<VehicleId> followers;  // F
  double a_min_new{0.0};             // entity output this step
  double last_applied_a{0.0};
  double dt_p{0.1};
  bool check_invariants{false};      // re-verify adoptions and count violations
};

ConsensusResult safe_consensus(ConsensusState& st, const ConsensusStepInput& in, const ConsensusInbox& inbox,
                               const ConsensusVerify& verify);

struct ConsensusSync {
  long epoch{0};
  double value{0.0};

  friend bool operator==(const ConsensusSync&, const ConsensusSync&) = default;
};

/// Source of the limit the platoon agrees on. Messages ride the same channel
/// as the protocol but the safety argument does not depend on them.
class ConsensusEntity {
 public:
  virtual ~ConsensusEntity() = default;
  virtual void receive(const ConsensusSync&) {}
  virtual std::optional<ConsensusSync> outgoing() const { return std::nullopt; }
  virtual double next_limit() = 0;
  virtual void reset() {}
  virtual bool converged() const = 0;
};

/// Always proposes the vehicle's physical limit.
class StaticEntity : public ConsensusEntity {
 public:
  explicit StaticEntity(double own) : own_(own) {}
  double next_limit() override { return own_; }
  bool converged() const override { return true; }

 private:
  double own_;
};

/// Flooding max-consensus on the weakest member limit; the output approaches
/// the estimate geometrically. reset() starts a new epoch from the own limit.
class ReferenceEntity : public ConsensusEntity {
 public:
  explicit ReferenceEntity(double own, double rate = 0.5, double snap = 1e-3)
      : own_(own), estimate_(own), output_(own), rate_(rate), snap_(snap) {}

  void receive(const ConsensusSync& m) override;
  std::optional<ConsensusSync> outgoing() const override { return ConsensusSync{epoch_, estimate_}; }
  double next_limit() override;
  void reset() override;
  bool converged() const override { return output_ == estimate_; }

  double estimate() const { return estimate_; }
  long epoch() const { return epoch_; }

 private:
  double own_;
  double estimate_;
  double output_;
  double rate_;
  double snap_;
  long epoch_{0};
};

/// One round of the reference entity fed with peer syncs, returning its output.
double reference_entity_step(ReferenceEntity& e, const std::vector<ConsensusSync>& peers);

}  // namespace platoon
