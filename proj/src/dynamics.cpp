#include "platoon/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace platoon {

double a_drag(double v, double rho, double c, double area, double mass, double v_wind) {
  const double u = v + v_wind;
  return -(rho * c * area / (2.0 * mass)) * u * u;
}

double a_incline(double alpha, double g) { return -g * std::sin(alpha); }

AccelLimits accel_limits(double t, const VehicleState& x, const VehicleParams& p, const Conditions& cond,
                         const EnvParams& env, const CutinTracker* cutin) {
  const double incline = a_incline(cond.alpha_at(x.s), cond.g);
  const double drag = a_drag(x.v, cond.rho, p.drag_coeff, p.frontal_area, p.mass, cond.v_wind);
  AccelLimits out{p.a_dec + incline + drag, p.a_acc + incline + drag};
  if (cutin != nullptr && cutin->remaining(t, env.t_clear) > 0.0) out.a_min = cutin->assumed_limit(env.a_dec_cutin);
  return out;
}

BoundLimits::BoundLimits(BoundKind kind, const VehicleParams& p, const EnvParams& env, double a_dec,
                         std::optional<CutinAssumption> cutin)
    : kind_(kind),
      a_dec_(a_dec),
      a_acc_(p.a_acc),
      g_(env.g),
      alpha_(env.alpha),
      v_wind_(env.v_wind),
      k_lo_(env.rho.lo * p.drag_coeff * p.frontal_area / (2.0 * p.mass)),
      k_hi_(env.rho.hi * p.drag_coeff * p.frontal_area / (2.0 * p.mass)),
      route_(env.route_profile.get()),
      route_margin_(env.route_margin),
      route_tol_(env.route_alpha_tol),
      cutin_(cutin) {}

AccelLimits BoundLimits::at(double tau, Interval alpha, Interval v) const {
  // sin is increasing on the admissible incline range, so the ends are the corners
  const double incline_lo = -g_ * std::sin(alpha.hi);
  const double incline_hi = -g_ * std::sin(alpha.lo);
  const Interval u{v.lo + v_wind_.lo, v.hi + v_wind_.hi};
  const double sq_max = std::max(u.lo * u.lo, u.hi * u.hi);
  const double sq_min = (u.lo <= 0.0 && u.hi >= 0.0) ? 0.0 : std::min(u.lo * u.lo, u.hi * u.hi);

  AccelLimits out;
  if (kind_ == BoundKind::Lower) {
    const double drag = -k_hi_ * sq_max;
    out = {a_dec_ + incline_lo + drag, a_acc_ + incline_lo + drag};
    if (cutin_) out.a_min = tau < cutin_->remaining ? cutin_->a_min : std::min(out.a_min, cutin_->a_min);
  } else {
    const double drag = -k_lo_ * sq_min;
    out = {a_dec_ + incline_hi + drag, a_acc_ + incline_hi + drag};
    if (cutin_ && tau < cutin_->remaining) out.a_min = std::max(out.a_min, cutin_->a_min);
  }
  return out;
}

AccelLimits BoundLimits::operator()(double tau, double s, double v) const {
  Interval alpha = alpha_;
  if (route_ != nullptr) {
    alpha = route_->range({s - route_margin_, s + route_margin_});
    alpha = {alpha.lo - route_tol_, alpha.hi + route_tol_};
  }
  return at(tau, alpha, Interval::point(v));
}

AccelLimits bound_accel_limits(BoundKind kind, double dt_step, const IntervalState& x, const VehicleParams& p,
                               const EnvParams& env, double a_dec, std::optional<CutinAssumption> cutin,
                               double tau) {
  const BoundLimits model(kind, p, env, a_dec, cutin);

  // Velocity and position reachable within dt_step from the extreme accelerations.
  const double brake = cutin ? std::min(a_dec, cutin->a_min) : a_dec;
  const double u_hi = x.v.hi + env.v_wind.hi;
  const double dv_lo = brake - env.g * std::sin(env.alpha.hi) - model.k_hi_ * u_hi * u_hi + env.w.lo;
  const double dv_hi = p.a_acc - env.g * std::sin(env.alpha.lo) + env.w.hi;
  const Interval v{std::max(0.0, x.v.lo + dt_step * std::min(dv_lo, 0.0)),
                   std::min(std::max(p.v_max, x.v.lo), x.v.hi + dt_step * std::max(dv_hi, 0.0))};
  const Interval s{x.s.lo, x.s.hi + dt_step * v.hi};

  Interval alpha = env.alpha;
  if (env.route_profile) {
    alpha = env.route_profile->range({s.lo - env.route_margin, s.hi + env.route_margin});
    alpha = {alpha.lo - env.route_alpha_tol, alpha.hi + env.route_alpha_tol};
  }
  // Over [tau, tau + dt_step]: the lower bound must hold at the latest time,
  // the upper bound at the earliest.
  const double when = kind == BoundKind::Lower ? tau + dt_step : tau;
  return model.at(when, alpha, v);
}

bool InputPlan::non_increasing() const {
  for (std::size_t k = 1; k < slots.size(); ++k)
    if (slots[k] > slots[k - 1]) return false;
  return slots.empty() || tail <= slots.back();
}

InputPlan InputPlan::shifted(std::size_t n) const {
  InputPlan out;
  out.tail = tail;
  if (n < slots.size()) out.slots.assign(slots.begin() + static_cast<std::ptrdiff_t>(n), slots.end());
  return out;
}

VehicleState step_model(VehicleState x, double a_d, double w, AccelLimits limits, double dt, double v_max,
                        int substeps) {
  const auto lim = [limits](double, double, double) { return limits; };
  const double h = dt / substeps;
  for (int i = 0; i < substeps; ++i) x = model_substep(x, i * h, h, a_d, w, v_max, lim);
  return x;
}

IntervalState predict_interval(const IntervalState& x, double a_lo, double a_hi, double a_dec, const VehicleParams& p,
                               const EnvParams& env, std::optional<CutinAssumption> cutin, int substeps) {
  const BoundLimits lower(BoundKind::Lower, p, env, a_dec, cutin);
  const BoundLimits upper(BoundKind::Upper, p, env, a_dec);
  const double h = env.dt_p / substeps;
  VehicleState lo = x.lower();
  VehicleState hi = x.upper();
  lo.v = std::clamp(lo.v, 0.0, p.v_max);
  hi.v = std::clamp(hi.v, 0.0, p.v_max);
  for (int i = 0; i < substeps; ++i) {
    lo = model_substep(lo, i * h, h, a_lo, env.w.lo, p.v_max, lower);
    hi = model_substep(hi, i * h, h, a_hi, env.w.hi, p.v_max, upper);
  }
  return {{lo.s, hi.s}, {lo.v, hi.v}};
}

IntervalState intersect_or(const IntervalState& meas, const IntervalState& predicted) {
  const Interval s{std::max(meas.s.lo, predicted.s.lo), std::min(meas.s.hi, predicted.s.hi)};
  const Interval v{std::max(meas.v.lo, predicted.v.lo), std::min(meas.v.hi, predicted.v.hi)};
  return {s.valid() ? s : meas.s, v.valid() ? v : meas.v};
}

BoundTrajectory lower_pos(const IntervalState& meas, const InputPlan& plan, double a_dec, const VehicleParams& p,
                          const EnvParams& env, const BoundOptions& opts, std::optional<CutinAssumption> cutin) {
  const BoundLimits lim(BoundKind::Lower, p, env, a_dec, cutin);
  return integrate_grid(meas.lower(), plan.shifted(opts.shift_slots), env.w.lo, p.v_max, lim, env.dt_p, opts,
                        p.length);
}

BoundTrajectory upper_pos(const IntervalState& meas, const InputPlan& plan, double a_dec, const VehicleParams& p,
                          const EnvParams& env, const BoundOptions& opts) {
  const BoundLimits lim(BoundKind::Upper, p, env, a_dec);
  return integrate_grid(meas.upper(), plan, env.w.hi, p.v_max, lim, env.dt_p, opts, 0.0);
}

}  // namespace platoon
