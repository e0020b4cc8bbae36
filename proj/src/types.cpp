#include "platoon/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace platoon {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void validate(const VehicleParams& p) {
  require(p.a_dec < 0.0, "a_dec must be negative");
  require(p.v_max > 0.0, "v_max must be positive");
  require(p.mass > 0.0, "mass must be positive");
  require(p.frontal_area > 0.0, "frontal_area must be positive");
  require(p.length >= 0.0, "length must be non-negative");
  require(p.drag_coeff >= 0.0, "drag_coeff must be non-negative");
  require(p.a_acc > p.a_dec, "a_acc must exceed a_dec");
}

void validate(const EnvParams& env) {
  require(env.rho.valid() && env.rho.lo >= 0.0, "rho interval invalid");
  require(env.v_wind.valid(), "v_wind interval invalid");
  require(env.alpha.valid(), "alpha interval invalid");
  require(env.w.valid() && env.w.lo <= 0.0 && env.w.hi >= 0.0, "w must contain 0");
  require(env.t_clear > 0.0, "t_clear must be positive");
  require(env.dt_p > 0.0, "dt_p must be positive");
  require(env.a_dec_cutin < 0.0, "a_dec_cutin must be negative");
  require(env.s_sensor > 0.0, "s_sensor must be positive");
}

namespace presets {

VehicleParams worst_case() { return {-12.0, 4.0, 60.0, 400.0, 2.0, 12.5, 0.0}; }
VehicleParams p0() { return {-5.0, 1.0, 25.0, 20000.0, 0.7, 7.0, 16.0}; }
VehicleParams p1() { return {-6.0, 1.5, 25.0, 15000.0, 0.5, 8.0, 14.0}; }
VehicleParams p2() { return {-10.0, 4.0, 60.0, 2500.0, 0.25, 1.7, 4.9}; }
VehicleParams p3() { return {-5.5, 1.0, 25.0, 20000.0, 0.6, 6.0, 16.0}; }
VehicleParams p4() { return {-9.0, 3.5, 50.0, 2000.0, 0.35, 2.4, 4.2}; }

std::optional<VehicleParams> by_name(std::string_view name) {
  if (name == "worst_case") return worst_case();
  if (name == "p0") return p0();
  if (name == "p1") return p1();
  if (name == "p2") return p2();
  if (name == "p3") return p3();
  if (name == "p4") return p4();
  return std::nullopt;
}

}  // namespace presets

InclineProfile::InclineProfile(std::vector<std::pair<double, double>> points)
    : points_(std::move(points)) {
  require(!points_.empty(), "incline profile needs at least one point");
  for (std::size_t i = 1; i < points_.size(); ++i)
    require(points_[i].first > points_[i - 1].first, "incline profile positions must increase");
}

double InclineProfile::at(double s) const {
  if (s <= points_.front().first) return points_.front().second;
  if (s >= points_.back().first) return points_.back().second;
  auto it = std::upper_bound(points_.begin(), points_.end(), s,
                             [](double x, const auto& p) { return x < p.first; });
  const auto& [s1, a1] = *it;
  const auto& [s0, a0] = *(it - 1);
  return a0 + (a1 - a0) * (s - s0) / (s1 - s0);
}

Interval InclineProfile::range(Interval s) const {
  double lo = std::min(at(s.lo), at(s.hi));
  double hi = std::max(at(s.lo), at(s.hi));
  for (const auto& [ps, pa] : points_) {
    if (ps <= s.lo) continue;
    if (ps >= s.hi) break;
    lo = std::min(lo, pa);
    hi = std::max(hi, pa);
  }
  return {lo, hi};
}

EnvParams EnvParams::exact(double rho, double v_wind, double alpha) {
  EnvParams env;
  env.rho = Interval::point(rho);
  env.v_wind = Interval::point(v_wind);
  env.alpha = Interval::point(alpha);
  env.w = Interval::point(0.0);
  return env;
}

double CutinTracker::remaining(double t, double t_clear) const {
  if (cleared) return 0.0;
  return std::max(0.0, t_clear - (t - t_start));
}

Interval interval_measure(double true_value, double max_width, Rng& rng) {
  if (max_width <= 0.0) return Interval::point(true_value);
  const double half = 0.5 * max_width;
  std::normal_distribution<double> noise(0.0, max_width / 6.0);
  const double center = true_value + std::clamp(noise(rng), -half, half);
  Interval out{center - half, center + half};
  // Rounding in center +- half must not push the true value outside.
  out.lo = std::min(out.lo, true_value);
  out.hi = std::max(out.hi, true_value);
  if (out.width() > max_width) {
    if (out.hi - max_width <= true_value) out.lo = out.hi - max_width;
    else out.hi = out.lo + max_width;
  }
  return out;
}

Interval interval_measure(double true_value, double max_width, std::uint64_t seed) {
  Rng rng(seed);
  return interval_measure(true_value, max_width, rng);
}

double truncated_gaussian(Interval bounds, Rng& rng) {
  if (bounds.width() <= 0.0) return bounds.lo;
  const double sigma = 0.5 * std::max(-bounds.lo, bounds.hi);
  if (sigma <= 0.0) return 0.0;
  std::normal_distribution<double> dist(0.0, sigma);
  return std::clamp(dist(rng), bounds.lo, bounds.hi);
}

}  // namespace platoon
