#include "platoon/verify.hpp"

#include <algorithm>

namespace platoon {

BoundTrajectory preceding_bound(const PrecedingInfo& pred, const EnvParams& env, const BoundOptions& opts) {
  return lower_pos(pred.meas, InputPlan::full_brake(), pred.a_min_assumed, pred.params, env, opts, pred.cutin);
}

void LimitSequence::include(double constant) {
  if (values_.empty()) {
    values_.push_back(constant);
    return;
  }
  for (double& v : values_) v = std::min(v, constant);
}

void LimitSequence::include(const BoundTrajectory& tr) {
  if (values_.empty()) {
    values_ = tr.positions;
    return;
  }
  const std::size_t n = std::max(values_.size(), tr.size());
  const double tail = values_.back();
  values_.resize(n, tail);
  for (std::size_t k = 0; k < n; ++k) values_[k] = std::min(values_[k], tr.at(k));
}

double LimitSequence::at(std::size_t k) const {
  if (values_.empty()) return kInf;
  return values_[std::min(k, values_.size() - 1)];
}

double LimitSequence::min() const {
  return values_.empty() ? kInf : *std::min_element(values_.begin(), values_.end());
}

LimitSequence LimitSequence::offset(double delta) const {
  LimitSequence out = *this;
  for (double& v : out.values_) v += delta;
  return out;
}

bool stays_behind(const BoundTrajectory& upper, const LimitSequence& limits) {
  const std::size_t n = std::max(upper.size(), limits.size() + 1);
  for (std::size_t k = 0; k + 1 < n; ++k)
    if (!(upper.at(k + 1) < limits.at(k))) return false;
  return true;
}

LimitSequence limit_sequence(const std::vector<PrecedingInfo>& preceding, const std::vector<double>& coll_positions,
                             const IntervalState& ego_meas, const EnvParams& env, const BoundOptions& opts) {
  LimitSequence out(ego_meas.s.lo + env.s_sensor);
  for (double c : coll_positions) out.include(c);
  for (const auto& p : preceding) out.include(preceding_bound(p, env, opts));
  return out;
}

bool plan_safe(const InputPlan& plan, const LimitSequence& limits, const IntervalState& ego_meas, double a_min_ego,
               const VehicleParams& params, const EnvParams& env, const BoundOptions& opts) {
  return stays_behind(upper_pos(ego_meas, plan, a_min_ego, params, env, opts), limits);
}

VerifyResult verify(double a_d, double a_min_ego, const std::vector<PrecedingInfo>& preceding,
                    const std::vector<double>& coll_positions, const IntervalState& ego_meas,
                    const VehicleParams& params, const EnvParams& env, const BoundOptions& opts) {
  VerifyResult out;
  out.limits = limit_sequence(preceding, coll_positions, ego_meas, env, opts);
  out.safe = plan_safe(InputPlan::hold_then_brake(a_d), out.limits, ego_meas, a_min_ego, params, env, opts);
  return out;
}

bool stop_behind(const IntervalState& ego_meas, double position, double a_min_ego, const VehicleParams& params,
                 const EnvParams& env, const BoundOptions& opts) {
  return plan_safe(InputPlan::full_brake(), LimitSequence(position), ego_meas, a_min_ego, params, env, opts);
}

double safe_distance(const IntervalState& ego_meas, const PrecedingInfo& pred, double a_min_ego,
                     const VehicleParams& params, const EnvParams& env, const BoundOptions& opts) {
  const BoundTrajectory ego = upper_pos(ego_meas, InputPlan::full_brake(), a_min_ego, params, env, opts);
  // Shifting the predecessor shifts its bound rigidly unless a route profile
  // makes the limits position dependent, so recompute in that case.
  const BoundTrajectory base = preceding_bound(pred, env, opts);
  auto safe_at = [&](double gap) {
    LimitSequence lim;
    if (env.route_profile) {
      PrecedingInfo p = pred;
      const double shift = ego_meas.s.hi + gap - base.at(0);
      p.meas.s = p.meas.s + shift;
      lim.include(preceding_bound(p, env, opts));
    } else {
      BoundTrajectory shifted = base;
      const double shift = ego_meas.s.hi + gap - base.at(0);
      for (double& x : shifted.positions) x += shift;
      lim.include(shifted);
    }
    return stays_behind(ego, lim);
  };
  if (safe_at(0.0)) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (!safe_at(hi)) {
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 0.01) {
    const double mid = 0.5 * (lo + hi);
    (safe_at(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace platoon
