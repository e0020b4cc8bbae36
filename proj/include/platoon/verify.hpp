#pragma once

#include <optional>
#include <vector>

#include "platoon/dynamics.hpp"

namespace platoon {

/// What the ego knows about one vehicle ahead of it.
/// `meas.s` is the front position: the measured rear plus `params.length`.
struct PrecedingInfo {
  VehicleId id{-1};
  IntervalState meas;
  VehicleParams params{presets::worst_case()};
  double a_min_assumed{-12.0};
  std::optional<CutinAssumption> cutin;
};

/// Lower bound on the predecessor's rear under full braking.
BoundTrajectory preceding_bound(const PrecedingInfo& pred, const EnvParams& env, const BoundOptions& opts = {});

/// Pointwise minimum of position sequences, constant beyond each end.
class LimitSequence {
 public:
  LimitSequence() = default;
  explicit LimitSequence(double constant) : values_{constant} {}

  void include(double constant);
  void include(const BoundTrajectory& tr);

  double at(std::size_t k) const;
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  double min() const;
  LimitSequence offset(double delta) const;
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> values_;
};

struct VerifyResult {
  bool safe{false};
  LimitSequence limits;
};

/// True iff every upper[k+1] stays strictly below limits[k].
bool stays_behind(const BoundTrajectory& upper, const LimitSequence& limits);

/// The positions the ego must not exceed: preceding rears, alerted collision
/// positions and the end of its sensor range.
LimitSequence limit_sequence(const std::vector<PrecedingInfo>& preceding, const std::vector<double>& coll_positions,
                             const IntervalState& ego_meas, const EnvParams& env, const BoundOptions& opts = {});

/// Safety of an ego plan against a prepared limit sequence.
bool plan_safe(const InputPlan& plan, const LimitSequence& limits, const IntervalState& ego_meas, double a_min_ego,
               const VehicleParams& params, const EnvParams& env, const BoundOptions& opts = {});

/// Safety of holding `a_d` for one period and braking afterwards.
VerifyResult verify(double a_d, double a_min_ego, const std::vector<PrecedingInfo>& preceding,
                    const std::vector<double>& coll_positions, const IntervalState& ego_meas,
                    const VehicleParams& params, const EnvParams& env, const BoundOptions& opts = {});

bool stop_behind(const IntervalState& ego_meas, double position, double a_min_ego, const VehicleParams& params,
                 const EnvParams& env, const BoundOptions& opts = {});

/// Smallest gap between ego front and predecessor rear for which an
/// immediately braking ego is verified safe against `pred` (0.01 m resolution).
double safe_distance(const IntervalState& ego_meas, const PrecedingInfo& pred, double a_min_ego,
                     const VehicleParams& params, const EnvParams& env, const BoundOptions& opts = {});

}  // namespace platoon
