#include "platoon/controllers.hpp"

#include <algorithm>
#include <cmath>

namespace platoon {

double nominal_cacc(const IntervalState& ego_meas, const PrecedingInfo* pred, double target_speed,
                    const VehicleParams& params, const NominalGains& gains) {
  const double v = ego_meas.v.mid();
  double a = gains.k_p * (target_speed - v);
  if (pred != nullptr) {
    const double gap = pred->meas.s.mid() - pred->params.length - ego_meas.s.mid();
    const double pd = gains.k_p * (gap - gains.headway * v - gains.d_standstill) + gains.k_d * (pred->meas.v.mid() - v);
    a = std::min(a, pd);
  }
  return std::clamp(a, params.a_dec, params.a_acc);
}

FailSafeConfig default_bracket(const IntervalState& ego_meas, double a_min_ego, const VehicleParams& params,
                               const EnvParams& env, double a_tol) {
  FailSafeConfig cfg;
  cfg.a_tol = a_tol;
  cfg.a_search_lo = bound_accel_limits(BoundKind::Lower, env.dt_p, ego_meas, params, env, a_min_ego).a_min;
  cfg.a_search_hi = bound_accel_limits(BoundKind::Upper, env.dt_p, ego_meas, params, env, a_min_ego).a_max;
  return cfg;
}

FailSafeSearch::FailSafeSearch(const LimitSequence& limits, const IntervalState& ego_meas, double a_min_ego,
                               const VehicleParams& params, const EnvParams& env, const FailSafeConfig& cfg,
                               const BoundOptions& opts)
    : limits_(limits),
      ego_(ego_meas),
      a_min_ego_(a_min_ego),
      params_(params),
      env_(env),
      cfg_(cfg),
      opts_(opts),
      lo_(cfg.a_search_lo),
      hi_(cfg.a_search_hi) {}

bool FailSafeSearch::safe(double a) {
  ++evals_;
  try {
    return plan_safe(InputPlan::hold_then_brake(a), limits_, ego_, a_min_ego_, params_, env_, opts_);
  } catch (const HorizonTooShort&) {
    return false;
  }
}

bool FailSafeSearch::step() {
  if (done_) return false;
  if (!started_) {
    started_ = true;
    lo_safe_ = safe(lo_);
    if (!lo_safe_) done_ = true;
    return !done_;
  }
  if (evals_ == 1) {
    hi_safe_ = safe(hi_);
    if (hi_safe_) done_ = true;
    return !done_;
  }
  if (hi_ - lo_ <= cfg_.a_tol) {
    done_ = true;
    return false;
  }
  const double mid = 0.5 * (lo_ + hi_);
  (safe(mid) ? lo_ : hi_) = mid;
  if (hi_ - lo_ <= cfg_.a_tol) done_ = true;
  return !done_;
}

std::optional<double> FailSafeSearch::best() const {
  if (!lo_safe_) return std::nullopt;
  if (!done_) return lo_;
  // hi_ is the smallest input known to be unsafe
  return hi_ - cfg_.a_tol;
}

std::optional<double> fail_safe(const LimitSequence& limits, const IntervalState& ego_meas, double a_min_ego,
                                const VehicleParams& params, const EnvParams& env, const FailSafeConfig& cfg,
                                const BoundOptions& opts) {
  FailSafeSearch search(limits, ego_meas, a_min_ego, params, env, cfg, opts);
  while (search.step()) {
  }
  return search.best();
}

double recap_objective(const std::vector<double>& inputs, double a_ref) {
  double sum = 0.0;
  double prev = a_ref;
  for (double u : inputs) {
    sum += (u - prev) * (u - prev);
    prev = u;
  }
  return sum;
}

namespace {

class RecapProblem {
 public:
  RecapProblem(const IntervalState& ego, const LimitSequence& limits, double margin, double a_min_ego,
               const VehicleParams& params, const EnvParams& env, const BoundOptions& opts)
      : ego_(ego),
        a_min_ego_(a_min_ego),
        params_(params),
        env_(env),
        opts_(opts),
        backed_off_(limits.offset(-margin)),
        strict_(limits) {}

  bool feasible(const std::vector<double>& inputs, bool with_margin = true) {
    ++evals;
    try {
      const auto up = upper_pos(ego_, {inputs, -kInf}, a_min_ego_, params_, env_, opts_);
      return stays_behind(up, with_margin ? backed_off_ : strict_);
    } catch (const HorizonTooShort&) {
      return false;
    }
  }

  int evals{0};

 private:
  IntervalState ego_;
  double a_min_ego_;
  const VehicleParams& params_;
  const EnvParams& env_;
  BoundOptions opts_;
  LimitSequence backed_off_;
  LimitSequence strict_;
};

}  // namespace

RecapPlan recap(const IntervalState& ego_meas, const PrecedingInfo& cutin_pred, double remaining_clear,
                double a_ref, double a_min_ego, const VehicleParams& params, const EnvParams& env,
                const RecapConfig& cfg, const BoundOptions& opts) {
  LimitSequence limits;
  try {
    limits.include(preceding_bound(cutin_pred, env, opts));
  } catch (const HorizonTooShort&) {
    return {};
  }
  RecapProblem prob(ego_meas, limits, cfg.margin, a_min_ego, params, env, opts);

  RecapPlan out;
  const auto n = static_cast<std::size_t>(std::max(0.0, std::ceil(remaining_clear / env.dt_p - 1e-9)));
  if (n == 0) {
    out.feasible = prob.feasible({}, false);
    return out;
  }

  const FailSafeConfig br = default_bracket(ego_meas, a_min_ego, params, env);
  const double a_lo = br.a_search_lo;
  const double a_top = std::clamp(a_ref, a_lo, std::max(a_lo, br.a_search_hi));
  auto constant = [n](double a) { return std::vector<double>(n, a); };

  if (prob.feasible(constant(a_top))) {
    out.inputs = constant(a_top);
  } else if (!prob.feasible(constant(a_lo))) {
    out.inputs = constant(a_lo);
    out.feasible = prob.feasible(out.inputs, false);
    out.objective = recap_objective(out.inputs, a_ref);
    return out;
  } else {
    // largest feasible constant input
    double lo = a_lo;
    double hi = a_top;
    while (hi - lo > cfg.tol) {
      const double mid = 0.5 * (lo + hi);
      (prob.feasible(constant(mid)) ? lo : hi) = mid;
    }
    std::vector<double> best = constant(lo);

    // largest feasible constant jerk starting from a_top
    auto ramp = [&](double j) {
      std::vector<double> u(n);
      for (std::size_t k = 0; k < n; ++k) u[k] = std::max(a_lo, a_top + j * static_cast<double>(k + 1) * env.dt_p);
      return u;
    };
    double j_lo = (a_lo - a_top) / env.dt_p;
    double j_hi = 0.0;
    while ((j_hi - j_lo) * env.dt_p > cfg.tol) {
      const double mid = 0.5 * (j_lo + j_hi);
      (prob.feasible(ramp(mid)) ? j_lo : j_hi) = mid;
    }
    const std::vector<double> r = ramp(j_lo);
    if (recap_objective(r, a_ref) < recap_objective(best, a_ref)) best = r;

    // projected coordinate descent on the non-increasing plans
    bool improved = true;
    while (improved && prob.evals < cfg.max_evaluations) {
      improved = false;
      for (std::size_t k = 0; k < n && prob.evals < cfg.max_evaluations; ++k) {
        const double prev = k == 0 ? a_top : best[k - 1];
        const double next = k + 1 < n ? best[k + 1] : a_lo;
        double target = k + 1 < n ? 0.5 * (prev + best[k + 1]) : prev;
        target = std::clamp(target, std::max(next, a_lo), prev);
        if (std::abs(target - best[k]) < 1e-6) continue;
        if (target < best[k]) {
          best[k] = target;
          improved = true;
          continue;
        }
        for (double step : {1.0, 0.5, 0.25}) {
          std::vector<double> trial = best;
          trial[k] = best[k] + step * (target - best[k]);
          if (prob.feasible(trial)) {
            best = std::move(trial);
            improved = true;
            break;
          }
        }
      }
    }
    out.inputs = std::move(best);
  }
  out.feasible = true;
  out.objective = recap_objective(out.inputs, a_ref);
  return out;
}

}  // namespace platoon
