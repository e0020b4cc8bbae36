#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "platoon/types.hpp"

namespace platoon {

struct AccelLimits {
  double a_min{0.0};
  double a_max{0.0};
};

enum class BoundKind { Lower, Upper };

/// Drag acceleration (always <= 0).
double a_drag(double v, double rho, double c, double area, double mass, double v_wind);
/// Incline acceleration; negative on an ascent.
double a_incline(double alpha, double g);

/// Actual air and road conditions seen by one simulated vehicle.
struct Conditions {
  double rho{1.2};
  double v_wind{0.0};
  double g{9.81};
  double alpha{0.0};                       // used when `profile` is null
  const InclineProfile* profile{nullptr};  // non-owning

  double alpha_at(double s) const { return profile != nullptr ? profile->at(s) : alpha; }
};

/// Overall acceleration limits of the true model at absolute time `t`.
/// An active, uncleared cut-in tracker replaces a_min by the cut-in assumption.
AccelLimits accel_limits(double t, const VehicleState& x, const VehicleParams& p, const Conditions& cond,
                         const EnvParams& env, const CutinTracker* cutin = nullptr);

/// Cut-in assumption as seen from the moment a bound is computed.
struct CutinAssumption {
  double a_min{-1.0};      // assumed braking limit of the cut-in vehicle
  double remaining{0.0};   // remaining clearing time [s]
};

/// Limit bounds evaluated along a bound trajectory's own (s, v).
/// Construction precomputes the worst/best parameter corners.
class BoundLimits {
 public:
  BoundLimits(BoundKind kind, const VehicleParams& p, const EnvParams& env, double a_dec,
              std::optional<CutinAssumption> cutin = std::nullopt);

  /// `tau` is the time elapsed since the bound started.
  AccelLimits operator()(double tau, double s, double v) const;

 private:
  AccelLimits at(double tau, Interval alpha, Interval v) const;

  BoundKind kind_;
  double a_dec_;
  double a_acc_;
  double g_;
  Interval alpha_;
  Interval v_wind_;
  double k_lo_;  // rho*c*A/(2m) over the rho interval
  double k_hi_;
  const InclineProfile* route_{nullptr};
  double route_margin_{0.0};
  double route_tol_{0.0};
  std::optional<CutinAssumption> cutin_;

  friend AccelLimits bound_accel_limits(BoundKind, double, const IntervalState&, const VehicleParams&,
                                        const EnvParams&, double, std::optional<CutinAssumption>, double);
};

/// Bounds on the acceleration limits valid for every state reachable from `x`
/// within `dt_step`. Lower bounds the limits from below, Upper from above.
AccelLimits bound_accel_limits(BoundKind kind, double dt_step, const IntervalState& x, const VehicleParams& p,
                               const EnvParams& env, double a_dec,
                               std::optional<CutinAssumption> cutin = std::nullopt, double tau = 0.0);

/// Desired acceleration, piecewise constant on planning slots.
struct InputPlan {
  std::vector<double> slots;
  double tail{-kInf};

  double at(std::size_t k) const { return k < slots.size() ? slots[k] : tail; }
  bool non_increasing() const;
  /// a(t + n * dt_p).
  InputPlan shifted(std::size_t n) const;

  static InputPlan full_brake() { return {}; }
  /// `a` during the first slot, full brake afterwards.
  static InputPlan hold_then_brake(double a) { return {{a}, -kInf}; }
};

/// Positions on the planning grid t = k * dt_p; constant from `stopped_at` on.
struct BoundTrajectory {
  std::vector<double> positions;
  std::size_t stopped_at{0};
  bool closed{true};  // false if the horizon cap was hit before standstill

  double at(std::size_t k) const { return positions[std::min(k, positions.size() - 1)]; }
  double final_position() const { return positions.back(); }
  std::size_t size() const { return positions.size(); }
};

class HorizonTooShort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BoundOptions {
  int substeps{10};               // RK4 substeps per planning period
  std::size_t horizon_cap{3000};  // grid points
  bool require_closure{true};     // throw HorizonTooShort if no standstill within cap
  std::size_t shift_slots{1};     // lower-bound input shift, dt_step = shift_slots * dt_p
};

/// Rear-position lower bounds (front bound minus length).
BoundTrajectory lower_pos(const IntervalState& meas, const InputPlan& plan, double a_dec, const VehicleParams& p,
                          const EnvParams& env, const BoundOptions& opts = {},
                          std::optional<CutinAssumption> cutin = std::nullopt);

/// Front-position upper bounds.
BoundTrajectory upper_pos(const IntervalState& meas, const InputPlan& plan, double a_dec, const VehicleParams& p,
                          const EnvParams& env, const BoundOptions& opts = {});

// ---------------------------------------------------------------------------
// Saturated longitudinal model and its integrator.

/// Right-hand side dv/dt of the saturated model.
template <class Limits>
double model_accel(double tau, double s, double v, double a_d, double w, double v_max, const Limits& lim) {
  if ((v <= 0.0 && a_d + w <= 0.0) || (v >= v_max && a_d + w >= 0.0)) return 0.0;
  const AccelLimits l = lim(tau, s, v);
  double a = a_d < l.a_min ? l.a_min : (a_d > l.a_max ? l.a_max : a_d);
  a += w;
  if (v <= 0.0 && a < 0.0) return 0.0;
  if (v >= v_max && a > 0.0) return 0.0;
  return a;
}

namespace detail {

// Unsaturated field, valid strictly between the velocity bounds.
template <class Limits>
double free_accel(double tau, double s, double v, double a_d, double w, const Limits& lim) {
  const AccelLimits l = lim(tau, s, v);
  return (a_d < l.a_min ? l.a_min : (a_d > l.a_max ? l.a_max : a_d)) + w;
}

template <class Limits>
VehicleState rk4(VehicleState x, double tau, double h, double a_d, double w, const Limits& lim) {
  const double k1s = x.v;
  const double k1v = free_accel(tau, x.s, x.v, a_d, w, lim);
  const double k2s = x.v + 0.5 * h * k1v;
  const double k2v = free_accel(tau + 0.5 * h, x.s + 0.5 * h * k1s, k2s, a_d, w, lim);
  const double k3s = x.v + 0.5 * h * k2v;
  const double k3v = free_accel(tau + 0.5 * h, x.s + 0.5 * h * k2s, k3s, a_d, w, lim);
  const double k4s = x.v + h * k3v;
  const double k4v = free_accel(tau + h, x.s + h * k3s, k4s, a_d, w, lim);
  return {x.s + h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s),
          x.v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)};
}

inline constexpr double kEventTol = 1e-9;  // [s]

}  // namespace detail

/// One RK4 substep of length h with constant a_d and w. Crossings of v = 0 and
/// v = v_max are located by bisection and the clamp is applied from there on.
template <class Limits>
VehicleState model_substep(VehicleState x, double tau, double h, double a_d, double w, double v_max,
                           const Limits& lim) {
  for (int guard = 0; guard < 4 && h > 0.0; ++guard) {
    if ((x.v <= 0.0 || x.v >= v_max) && model_accel(tau, x.s, x.v, a_d, w, v_max, lim) == 0.0) {
      x.s += x.v * h;
      return x;
    }
    const VehicleState next = detail::rk4(x, tau, h, a_d, w, lim);
    const bool below = next.v < 0.0;
    const bool above = next.v > v_max;
    if (!below && !above) return next;
    const double bound = below ? 0.0 : v_max;
    double lo = 0.0;
    double hi = h;
    while (hi - lo > detail::kEventTol) {
      const double mid = 0.5 * (lo + hi);
      const double vm = detail::rk4(x, tau, mid, a_d, w, lim).v;
      if (below ? vm > 0.0 : vm < v_max) lo = mid;
      else hi = mid;
    }
    x = detail::rk4(x, tau, hi, a_d, w, lim);
    x.v = bound;
    tau += hi;
    h -= hi;
  }
  return x;
}

/// Advances a grid trajectory: positions[k] = s(k * dt_p) - offset.
template <class Limits>
BoundTrajectory integrate_grid(VehicleState x, const InputPlan& plan, double w, double v_max, const Limits& lim,
                               double dt_p, const BoundOptions& opts, double offset) {
  x.v = std::clamp(x.v, 0.0, v_max);
  // suffix maxima of the plan decide whether a standstill is final
  std::vector<double> suffix_max(plan.slots.size() + 1, plan.tail);
  for (std::size_t k = plan.slots.size(); k-- > 0;) suffix_max[k] = std::max(plan.slots[k], suffix_max[k + 1]);
  auto future_max = [&](std::size_t k) { return suffix_max[std::min(k, plan.slots.size())]; };

  BoundTrajectory out;
  const double h = dt_p / opts.substeps;
  for (std::size_t k = 0;; ++k) {
    out.positions.push_back(x.s - offset);
    if (x.v <= 0.0 && future_max(k) + w <= 0.0) {
      out.stopped_at = k;
      return out;
    }
    if (k + 1 >= opts.horizon_cap) break;
    const double a_d = plan.at(k);
    const double tau0 = static_cast<double>(k) * dt_p;
    for (int i = 0; i < opts.substeps; ++i) x = model_substep(x, tau0 + i * h, h, a_d, w, v_max, lim);
  }
  out.closed = false;
  out.stopped_at = out.positions.size() - 1;
  if (opts.require_closure) throw HorizonTooShort("no standstill within the horizon cap");
  return out;
}

/// States reachable after one planning period: the lower end applies `a_lo`
/// under lower-bound limits, the upper end `a_hi` under upper-bound limits.
IntervalState predict_interval(const IntervalState& x, double a_lo, double a_hi, double a_dec, const VehicleParams& p,
                               const EnvParams& env, std::optional<CutinAssumption> cutin = std::nullopt,
                               int substeps = 10);

/// Intersection of a measurement with a prediction; the measurement alone if
/// they are disjoint in some component.
IntervalState intersect_or(const IntervalState& meas, const IntervalState& predicted);

/// One planning period of the saturated model under fixed limits.
VehicleState step_model(VehicleState x, double a_d, double w, AccelLimits limits, double dt, double v_max,
                        int substeps = 10);

/// Exact limits of the true model as a callable for the integrator.
struct TrueLimits {
  const VehicleParams* params;
  const EnvParams* env;
  Conditions cond;
  double a_dec;
  double t0{0.0};
  const CutinTracker* cutin{nullptr};

  AccelLimits operator()(double tau, double s, double v) const {
    VehicleParams p = *params;
    p.a_dec = a_dec;
    return accel_limits(t0 + tau, {s, v}, p, cond, *env, cutin);
  }
};

}  // namespace platoon
