#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace platoon {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using VehicleId = int;
using Rng = std::mt19937_64;

/// Closed interval [lo, hi] enclosing an uncertain quantity.
struct Interval {
  double lo{0.0};
  double hi{0.0};

  static constexpr Interval point(double x) { return {x, x}; }

  constexpr double width() const { return hi - lo; }
  constexpr double mid() const { return 0.5 * (lo + hi); }
  constexpr bool contains(double x) const { return lo <= x && x <= hi; }
  constexpr bool valid() const { return lo <= hi; }

  friend constexpr bool operator==(const Interval&, const Interval&) = default;
};

constexpr Interval operator+(Interval a, Interval b) { return {a.lo + b.lo, a.hi + b.hi}; }
constexpr Interval operator-(Interval a, Interval b) { return {a.lo - b.hi, a.hi - b.lo}; }
constexpr Interval operator+(Interval a, double c) { return {a.lo + c, a.hi + c}; }
constexpr Interval operator-(Interval a, double c) { return {a.lo - c, a.hi - c}; }

// Elementwise min/max: if x in X and y in Y then min(x,y) in min(X,Y).
constexpr Interval min(Interval a, Interval b) {
  return {a.lo < b.lo ? a.lo : b.lo, a.hi < b.hi ? a.hi : b.hi};
}
constexpr Interval max(Interval a, Interval b) {
  return {a.lo > b.lo ? a.lo : b.lo, a.hi > b.hi ? a.hi : b.hi};
}

/// Intersection with [floor, +inf); the caller guarantees the true value is >= floor.
constexpr Interval clamp_below(Interval a, double floor) {
  return {a.lo < floor ? floor : a.lo, a.hi < floor ? floor : a.hi};
}

struct VehicleState {
  double s{0.0};  // front position [m]
  double v{0.0};  // velocity [m/s]
};

/// Measured state: position and velocity intervals.
struct IntervalState {
  Interval s;
  Interval v;

  static constexpr IntervalState exact(VehicleState x) {
    return {Interval::point(x.s), Interval::point(x.v)};
  }
  constexpr VehicleState lower() const { return {s.lo, v.lo}; }
  constexpr VehicleState upper() const { return {s.hi, v.hi}; }
  constexpr bool contains(VehicleState x) const { return s.contains(x.s) && v.contains(x.v); }
};

/// Physical capabilities of one vehicle. Braking limits are negative.
struct VehicleParams {
  double a_dec{-5.0};        // brake/tire deceleration limit [m/s^2], < 0
  double a_acc{1.0};         // engine acceleration limit [m/s^2]
  double v_max{25.0};        // [m/s]
  double mass{20000.0};      // [kg]
  double drag_coeff{0.7};    // c
  double frontal_area{7.0};  // A [m^2]
  double length{16.0};       // l [m]

  friend bool operator==(const VehicleParams&, const VehicleParams&) = default;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const VehicleParams& p);

namespace presets {

// Conservative assumption for vehicles whose parameters were never received.
// The table leaves a_acc, v_max and l open; we use the largest a_acc/v_max of
// the known vehicles and l = 0 because the sensor reports the rear directly.
VehicleParams worst_case();
VehicleParams p0();
VehicleParams p1();
VehicleParams p2();
VehicleParams p3();
VehicleParams p4();

std::optional<VehicleParams> by_name(std::string_view name);

}  // namespace presets

/// Piecewise-linear incline alpha(s), constant beyond the end points.
class InclineProfile {
 public:
  /// Points (s, alpha) with strictly increasing s. Throws on bad input.
  explicit InclineProfile(std::vector<std::pair<double, double>> points);

  double at(double s) const;
  /// Tight range of alpha over the positions in `s`.
  Interval range(Interval s) const;
  const std::vector<std::pair<double, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<double, double>> points_;
};

/// Environment, disturbance and protocol constants shared by all vehicles.
struct EnvParams {
  Interval rho{1.1, 1.3};        // air density [kg/m^3]
  Interval v_wind{1.4, 4.2};     // headwind [m/s]
  Interval alpha{-0.06, 0.06};   // incline [rad], positive = ascent
  double g{9.81};
  Interval w{-0.1, 0.1};         // disturbance [m/s^2]
  double s_sensor{200.0};        // [m]
  double t_clear{4.0};           // clearing time t_C [s]
  double a_dec_cutin{-1.0};      // assumed cut-in braking [m/s^2], < 0
  double dt_p{0.1};              // planning period [s]

  // Known route profile. When set, bounds use its incline range over
  // [s - route_margin, s + route_margin] (plus route_alpha_tol) instead of `alpha`.
  std::shared_ptr<const InclineProfile> route_profile;
  double route_margin{25.0};
  double route_alpha_tol{0.005};

  /// Degenerate intervals, no disturbance, flat road. Used by oracles.
  static EnvParams exact(double rho, double v_wind, double alpha);
};

void validate(const EnvParams& env);

/// Per-observer record of a vehicle that cut in ahead.
struct CutinTracker {
  double t_start{0.0};
  double a_min_observed{-1.0};
  bool cleared{false};

  static CutinTracker start(double t, double a_dec_cutin) { return {t, a_dec_cutin, false}; }

  /// Remaining clearing time; zero once the safe distance was re-established.
  double remaining(double t, double t_clear) const;
  /// Assumed braking limit of the cut-in vehicle.
  double assumed_limit(double a_dec_cutin) const {
    return a_min_observed < a_dec_cutin ? a_min_observed : a_dec_cutin;
  }
};

/// Measurement interval around `true_value` with Gaussian center offset.
/// The interval always contains the true value and is at most `max_width` wide.
Interval interval_measure(double true_value, double max_width, Rng& rng);
Interval interval_measure(double true_value, double max_width, std::uint64_t seed);

/// Zero-mean Gaussian sample truncated to `bounds` (by clipping).
double truncated_gaussian(Interval bounds, Rng& rng);

}  // namespace platoon
