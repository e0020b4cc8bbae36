#pragma once

#include <optional>
#include <vector>

#include "platoon/verify.hpp"

namespace platoon {

struct NominalGains {
  double k_p{0.8};
  double k_d{1.2};
  double headway{0.3};        // [s]
  double d_standstill{2.0};   // [m]
};

/// PD gap control to the direct predecessor (if any), never faster than the
/// speed-tracking law toward `target_speed`. Clamped to [a_dec, a_acc].
double nominal_cacc(const IntervalState& ego_meas, const PrecedingInfo* pred, double target_speed,
                    const VehicleParams& params, const NominalGains& gains = {});

struct FailSafeConfig {
  double a_tol{0.05};
  double a_search_lo{-kInf};
  double a_search_hi{kInf};
};

/// Bracket for the fail-safe search from the current bound limits.
FailSafeConfig default_bracket(const IntervalState& ego_meas, double a_min_ego, const VehicleParams& params,
                               const EnvParams& env, double a_tol = 0.05);

/// Bisection for the largest first-slot input that keeps the ego behind the
/// limit sequence. Each step() is one verify call, and best() is always safe.
class FailSafeSearch {
 public:
  FailSafeSearch(const LimitSequence& limits, const IntervalState& ego_meas, double a_min_ego,
                 const VehicleParams& params, const EnvParams& env, const FailSafeConfig& cfg,
                 const BoundOptions& opts = {});

  /// Advances the search; returns false once finished.
  bool step();
  bool done() const { return done_; }
  /// Safe input found so far; empty if none exists (or none found yet).
  std::optional<double> best() const;
  int evaluations() const { return evals_; }

 private:
  bool safe(double a);

  const LimitSequence& limits_;
  IntervalState ego_;
  double a_min_ego_;
  VehicleParams params_;
  const EnvParams& env_;
  FailSafeConfig cfg_;
  BoundOptions opts_;
  double lo_;
  double hi_;
  bool lo_safe_{false};
  bool hi_safe_{false};
  bool started_{false};
  bool done_{false};
  int evals_{0};
};

/// nullopt when even immediate full braking is unsafe.
std::optional<double> fail_safe(const LimitSequence& limits, const IntervalState& ego_meas, double a_min_ego,
                                const VehicleParams& params, const EnvParams& env, const FailSafeConfig& cfg,
                                const BoundOptions& opts = {});

struct RecapConfig {
  double margin{0.05};   // [m] kept from the predecessor bound while optimizing
  int max_evaluations{200};
  double tol{0.01};      // [m/s^2] initial bisections
};

struct RecapPlan {
  std::vector<double> inputs;  // one per planning slot, then full braking
  bool feasible{false};
  double objective{0.0};

  InputPlan plan() const { return {inputs, -kInf}; }
};

/// Squared input changes, starting from `a_ref`.
double recap_objective(const std::vector<double>& inputs, double a_ref);

/// Smooth braking plan that stays behind the cut-in vehicle's lower bound over
/// the remaining clearing time. Plans are non-increasing.
RecapPlan recap(const IntervalState& ego_meas, const PrecedingInfo& cutin_pred, double remaining_clear,
                double a_ref, double a_min_ego, const VehicleParams& params, const EnvParams& env,
                const RecapConfig& cfg = {}, const BoundOptions& opts = {});

}  // namespace platoon
