#include "platoon/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <random>
#include <set>

namespace platoon {

namespace {

constexpr double kEventEps = 1e-9;
constexpr double kConvergedSpread = 0.01;

// Full-brake verification with bounds memoized per assumption.
class FullBrakeChecker {
 public:
  FullBrakeChecker(const IntervalState& ego, const VehicleParams& params, const EnvParams& env,
                   const std::vector<double>& alerts, const BoundOptions& opts)
      : ego_(ego), params_(params), env_(env), opts_(opts), base_(ego.s.lo + env.s_sensor) {
    for (double c : alerts) base_.include(c);
  }

  bool operator()(double a_min_ego, const std::vector<PrecedingInfo>& preds) {
    const BoundTrajectory* up = ego_upper(a_min_ego);
    if (up == nullptr) return false;
    LimitSequence lim = base_;
    for (const auto& p : preds) {
      const BoundTrajectory* b = pred_bound(p);
      if (b == nullptr) return false;
      lim.include(*b);
    }
    return stays_behind(*up, lim);
  }

 private:
  const BoundTrajectory* ego_upper(double a_min) {
    auto [it, fresh] = uppers_.try_emplace(a_min);
    if (fresh) {
      try {
        it->second = upper_pos(ego_, InputPlan::full_brake(), a_min, params_, env_, opts_);
      } catch (const HorizonTooShort&) {
      }
    }
    return it->second ? &*it->second : nullptr;
  }

  const BoundTrajectory* pred_bound(const PrecedingInfo& p) {
    auto [it, fresh] = preds_.try_emplace({p.id, p.a_min_assumed});
    if (fresh) {
      try {
        it->second = preceding_bound(p, env_, opts_);
      } catch (const HorizonTooShort&) {
      }
    }
    return it->second ? &*it->second : nullptr;
  }

  const IntervalState& ego_;
  const VehicleParams& params_;
  const EnvParams& env_;
  BoundOptions opts_;
  LimitSequence base_;
  std::map<double, std::optional<BoundTrajectory>> uppers_;
  std::map<std::pair<VehicleId, double>, std::optional<BoundTrajectory>> preds_;
};

bool in_clearing(const PrecedingInfo& p) { return p.cutin && p.cutin->remaining > 0.0; }

Envelope broadcast(VehicleId self, double t, long step, Payload p) { return {self, -1, t, step, std::move(p)}; }

}  // namespace

PlanningOutcome planning_step(const PlanningView& view, ProtocolState& st, const EnvParams& env,
                              const PlanningConfig& cfg) {
  static const Mailbox kEmpty;
  const Mailbox& mb = view.mailbox != nullptr ? *view.mailbox : kEmpty;
  ConsensusState& cs = st.consensus;
  PlanningOutcome out;

  out.sends = coupling_step(view.self, view.direct_pred, view.direct_succ, mb, st.coupling, view.t, view.step);
  for (VehicleId l : st.coupling.leaders) cs.add_leader(l);

  auto with_stored = [&](PrecedingInfo p) {
    if (const auto it = cs.leader_limits.find(p.id); it != cs.leader_limits.end()) p.a_min_assumed = it->second.a;
    return p;
  };

  // Vehicles ahead of a coupled direct predecessor are covered by its own guarantee.
  std::vector<PrecedingInfo> x;
  const bool coupled = view.direct_pred && st.coupling.leaders.count(*view.direct_pred) > 0;
  for (const auto& p : view.preceding)
    if (!coupled || p.id == *view.direct_pred) x.push_back(p);

  FullBrakeChecker check(view.ego, view.params, env, view.alerts, cfg.bound);

  {
    std::vector<PrecedingInfo> pairs;
    for (const auto& p : x)
      if (!in_clearing(p)) pairs.push_back(with_stored(p));
    out.spec_ok = check(cs.a_min_forced, pairs);
  }

  for (const auto& [key, e] : mb.entries())
    if (const auto* sync = std::get_if<ConsensusSync>(&e.payload)) st.entity->receive(*sync);

  ConsensusInbox inbox;
  for (VehicleId l : st.coupling.leaders)
    if (const auto* m = mb.get<BrakingLimit>(l)) inbox.leader_limits[l] = {m->a, m->label};
  for (VehicleId f : st.coupling.followers)
    if (const auto* m = mb.get<Confirmation>(f)) inbox.confirmations[f] = {m->a, m->label};

  ConsensusStepInput in;
  in.t = view.t;
  for (const auto& p : x) in.preceding.push_back(p.id);
  in.leaders.assign(st.coupling.leaders.begin(), st.coupling.leaders.end());
  in.followers.assign(st.coupling.followers.begin(), st.coupling.followers.end());
  in.a_min_new = st.entity->next_limit();
  in.last_applied_a = st.last_applied_a;
  in.dt_p = env.dt_p;
  in.check_invariants = cfg.check_invariants;

  auto consensus_verify = [&](double a_min_ego, const std::vector<LimitAssumption>& assumed) {
    std::vector<PrecedingInfo> preds;
    for (const auto& a : assumed) {
      const auto it = std::find_if(x.begin(), x.end(), [&](const PrecedingInfo& p) { return p.id == a.id; });
      if (it == x.end()) continue;
      PrecedingInfo p = *it;
      if (a.a_min) p.a_min_assumed = *a.a_min;
      preds.push_back(p);
    }
    return check(a_min_ego, preds);
  };
  const ConsensusResult cr = safe_consensus(cs, in, inbox, consensus_verify);
  for (const auto& [l, lim] : cr.outbox.confirmations)
    out.sends.push_back({view.self, l, view.t, view.step, Confirmation{lim.a, lim.label}});
  out.sends.push_back(broadcast(view.self, view.t, view.step, BrakingLimit{cr.outbox.broadcast.a, cr.outbox.broadcast.label}));
  if (auto sync = st.entity->outgoing()) out.sends.push_back(broadcast(view.self, view.t, view.step, *sync));
  out.sends.push_back(broadcast(view.self, view.t, view.step, ParamsBroadcast{view.params}));
  out.transition = cs.transition.active;

  for (auto& p : x) p = with_stored(p);
  const double a_min_ego = cs.a_min_forced;
  VehicleParams own = view.params;
  own.a_dec = a_min_ego;

  const PrecedingInfo* direct = nullptr;
  for (const auto& p : x)
    if (view.direct_pred && p.id == *view.direct_pred) direct = &p;
  out.nominal = view.command ? *view.command : nominal_cacc(view.ego, direct, view.target_speed, own, cfg.gains);

  double recap_bound = kInf;
  for (const auto& p : x) {
    if (!in_clearing(p)) continue;
    out.recap = true;
    const RecapPlan rp =
        recap(view.ego, p, p.cutin->remaining, st.last_applied_a, a_min_ego, own, env, cfg.recap, cfg.bound);
    if (rp.feasible && !rp.inputs.empty()) recap_bound = std::min(recap_bound, rp.inputs.front());
  }

  out.a_d = std::min({out.nominal, recap_bound, cr.a_trans_bound});

  LimitSequence limits(view.ego.s.lo + env.s_sensor);
  bool bounds_ok = true;
  for (double c : view.alerts) limits.include(c);
  for (const auto& p : x) {
    try {
      limits.include(preceding_bound(p, env, cfg.bound));
    } catch (const HorizonTooShort&) {
      bounds_ok = false;
    }
  }
  auto safe = [&](double a) {
    try {
      return bounds_ok && plan_safe(InputPlan::hold_then_brake(a), limits, view.ego, a_min_ego, own, env, cfg.bound);
    } catch (const HorizonTooShort&) {
      return false;
    }
  };

  std::optional<double> chosen;
  if (safe(out.a_d)) {
    chosen = out.a_d;
  } else if (bounds_ok) {
    const FailSafeConfig fs = default_bracket(view.ego, a_min_ego, own, env, cfg.a_tol);
    if (auto a = fail_safe(limits, view.ego, a_min_ego, own, env, fs, cfg.bound)) {
      chosen = std::min(out.a_d, *a);
      out.fail_safe = true;
    }
  }

  if (!chosen) {
    BoundOptions open = cfg.bound;
    open.require_closure = false;
    const BoundTrajectory up = upper_pos(view.ego, InputPlan::full_brake(), a_min_ego, own, env, open);
    std::size_t k_coll = 0;
    while (k_coll + 1 < up.size() && up.at(k_coll + 1) < limits.at(k_coll)) ++k_coll;
    out.s_coll = up.at(k_coll) - own.length;
    out.sends.push_back(broadcast(view.self, view.t, view.step, CollisionAlert{*out.s_coll}));
    out.a_d = -kInf;
    st.alert_outstanding = true;
    st.withdraw_left = 0;
  } else {
    out.a_d = *chosen;
    if (st.alert_outstanding) {
      st.alert_outstanding = false;
      st.withdraw_left = cfg.withdraw_repeats;
    }
    if (st.withdraw_left > 0) {
      --st.withdraw_left;
      out.sends.push_back(broadcast(view.self, view.t, view.step, AlertWithdraw{}));
    }
  }
  st.last_applied_a = std::clamp(out.a_d, a_min_ego, own.a_acc);
  return out;
}

CutinTracker cutin_update(CutinTracker tracker, double observed_a, bool gap_ok, double t) {
  (void)t;
  tracker.a_min_observed = std::min(tracker.a_min_observed, observed_a);
  if (gap_ok) tracker.cleared = true;
  return tracker;
}

namespace {

enum Stream : std::uint32_t { kNoise = 1, kDisturbance = 2, kRoad = 3, kChannel = 4 };

Rng stream(std::uint64_t seed, std::uint32_t id, Stream purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id,
                    static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

double uniform(Interval i, Rng& rng) {
  return i.width() > 0.0 ? std::uniform_real_distribution<double>(i.lo, i.hi)(rng) : i.lo;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct TickPlan {
  double a_d{0.0};
  PlanningOutcome outcome;
  int alerts_seen{0};
  double safe_distance{std::numeric_limits<double>::quiet_NaN()};
};

struct SimVehicle {
  VehicleId id{-1};
  std::string name;
  VehicleParams params;
  VehicleState x;
  bool member{false};
  bool alive{true};
  double target{0.0};
  bool full_brake{false};
  std::optional<double> hold;
  double a_applied{0.0};
  Rng noise;
  Rng disturbance;
  Mailbox mb;
  std::unique_ptr<ProtocolState> proto;
  std::map<VehicleId, IntervalState> predicted;  // own front state, others' rear state
  std::map<VehicleId, CutinTracker> cutins;

  double rear() const { return x.s - params.length; }
  double a_min() const { return proto ? proto->consensus.a_min_forced : params.a_dec; }
};

class Simulation {
 public:
  Simulation(const Scenario& sc, const SimOptions& opts) : sc_(sc), opts_(opts), env_(sc.env) {
    validate(sc_);
    Rng road = stream(sc.seed, 0, kRoad);
    cond_.rho = sc.road.rho ? *sc.road.rho : uniform(env_.rho, road);
    cond_.v_wind = sc.road.v_wind ? *sc.road.v_wind : uniform(env_.v_wind, road);
    cond_.g = env_.g;
    cond_.alpha = sc.road.alpha;
    if (sc.road.incline_profile) {
      profile_ = std::make_shared<const InclineProfile>(*sc.road.incline_profile);
      cond_.profile = profile_.get();
      if (sc.road.route_aware) env_.route_profile = profile_;
    }
    ChannelConfig cc = sc.channel;
    if (!sc.channel_seed_set) cc.seed = stream(sc.seed, 0, kChannel)();
    channel_ = Channel(cc, opts.record_trace);
    for (const auto& v : sc.vehicles) add_vehicle(v.name, v.params, v.init, v.member, v.target_speed);
    events_fired_.assign(sc.events.size(), false);
    depart_time_ = kInf;
    for (const auto& e : sc.events)
      if (e.type == EventType::Depart) depart_time_ = std::min(depart_time_, e.t);
  }

  RunResult run() {
    const double dt = env_.dt_p;
    const long n_steps = static_cast<long>(std::llround(sc_.duration / dt));
    for (long k = 0; k < n_steps; ++k) {
      if (!tick(k)) break;
    }
    finish();
    result_.trace = channel_.trace();
    return std::move(result_);
  }

 private:
  void add_vehicle(const std::string& name, const VehicleParams& p, VehicleState x, bool member, double target) {
    SimVehicle v;
    v.id = static_cast<VehicleId>(vehicles_.size());
    v.name = name;
    v.params = p;
    v.x = x;
    v.member = member;
    v.target = target;
    v.noise = stream(sc_.seed, static_cast<std::uint32_t>(v.id), kNoise);
    v.disturbance = stream(sc_.seed, static_cast<std::uint32_t>(v.id), kDisturbance);
    if (member) {
      std::unique_ptr<ConsensusEntity> entity;
      if (sc_.consensus) entity = std::make_unique<ReferenceEntity>(p.a_dec);
      else entity = std::make_unique<StaticEntity>(p.a_dec);
      v.proto = std::make_unique<ProtocolState>(p.a_dec, std::move(entity));
    }
    vehicles_.push_back(std::move(v));
  }

  SimVehicle* find(const std::string& name) {
    for (auto& v : vehicles_)
      if (v.alive && v.name == name) return &v;
    return nullptr;
  }

  // Alive vehicles, front first.
  std::vector<SimVehicle*> ordered() {
    std::vector<SimVehicle*> out;
    for (auto& v : vehicles_)
      if (v.alive) out.push_back(&v);
    std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->x.s > b->x.s; });
    return out;
  }

  void apply_event(const Event& e, double t) {
    if (e.type == EventType::CutIn) {
      SimVehicle* behind = find(e.ahead_of);
      if (behind == nullptr) throw ScenarioError("cut_in: vehicle '" + e.ahead_of + "' is not on the road");
      const VehicleState x{behind->x.s + e.gap + e.params.length, e.v};
      for (auto* o : ordered())
        if (o->x.s > behind->x.s && o->rear() < x.s && o->x.s > x.s - e.params.length)
          throw ScenarioError("cut_in '" + e.vehicle + "' overlaps vehicle '" + o->name + "'");
      add_vehicle(e.vehicle, e.params, x, false, e.v);
      SimVehicle& nv = vehicles_.back();
      for (auto& o : vehicles_)
        if (o.alive && o.member && o.x.s < nv.rear()) o.cutins[nv.id] = CutinTracker::start(t, env_.a_dec_cutin);
      return;
    }
    SimVehicle* v = find(e.vehicle);
    if (v == nullptr) return;
    switch (e.type) {
      case EventType::FullBrake: v->full_brake = true; break;
      case EventType::SetTarget:
        v->target = e.value;
        v->full_brake = false;
        v->hold.reset();
        break;
      case EventType::HoldAccel: v->hold = e.value; break;
      case EventType::Depart: depart(*v); break;
      case EventType::CutIn: break;
    }
  }

  void depart(SimVehicle& gone) {
    gone.alive = false;
    for (auto& o : vehicles_) {
      if (!o.alive) continue;
      o.mb.forget(gone.id);
      o.cutins.erase(gone.id);
      o.predicted.erase(gone.id);
      if (!o.proto) continue;
      o.proto->coupling.leaders.erase(gone.id);
      o.proto->coupling.followers.erase(gone.id);
      o.proto->consensus.remove_leader(gone.id);
      o.proto->consensus.remove_follower(gone.id);
      o.proto->entity->reset();
    }
  }

  IntervalState measure(Rng& rng, double s, double v) const {
    return {interval_measure(s, sc_.noise.position_width, rng),
            clamp_below(interval_measure(v, sc_.noise.velocity_width, rng), 0.0)};
  }

  PlanningView view_of(SimVehicle& me, const std::vector<SimVehicle*>& order, double t, long k) {
    PlanningView view;
    view.self = me.id;
    view.t = t;
    view.step = k;
    view.params = me.params;
    view.target_speed = me.target;
    if (me.full_brake) view.command = -kInf;
    else if (me.hold) view.command = *me.hold;
    view.mailbox = &me.mb;

    view.ego = measure(me.noise, me.x.s, me.x.v);
    if (auto it = me.predicted.find(me.id); it != me.predicted.end()) view.ego = intersect_or(view.ego, it->second);

    const auto pos = std::find(order.begin(), order.end(), &me) - order.begin();
    for (auto i = pos; i-- > 0;) {
      SimVehicle& o = *order[static_cast<std::size_t>(i)];
      if (o.rear() - me.x.s > env_.s_sensor) break;
      IntervalState rear = measure(me.noise, o.rear(), o.x.v);
      if (auto it = me.predicted.find(o.id); it != me.predicted.end()) rear = intersect_or(rear, it->second);
      PrecedingInfo p;
      p.id = o.id;
      if (const auto* pb = me.mb.get<ParamsBroadcast>(o.id)) p.params = pb->params;
      p.a_min_assumed = p.params.a_dec;
      p.meas = {rear.s + p.params.length, rear.v};
      view.preceding.push_back(p);
    }
    if (pos > 0 && !view.preceding.empty() && view.preceding.front().id == order[pos - 1]->id)
      view.direct_pred = order[pos - 1]->id;
    if (pos + 1 < static_cast<long>(order.size()) && me.x.s - order[pos + 1]->x.s - me.params.length <= env_.s_sensor)
      view.direct_succ = order[pos + 1]->id;

    for (const auto& [key, e] : me.mb.entries()) {
      if (key.second != payload_lane(Payload{CollisionAlert{}})) continue;
      const double c = collision_pos(me.mb, key.first);
      if (std::isfinite(c)) view.alerts.push_back(c);
    }
    return view;
  }

  void update_cutins(SimVehicle& me, const PlanningView& view, double t) {
    for (auto it = me.cutins.begin(); it != me.cutins.end();) {
      auto p = std::find_if(view.preceding.begin(), view.preceding.end(),
                            [&](const PrecedingInfo& q) { return q.id == it->first; });
      if (it->second.remaining(t, env_.t_clear) <= 0.0 || p == view.preceding.end()) {
        it = me.cutins.erase(it);
        continue;
      }
      bool gap_ok = false;
      try {
        gap_ok = verify(-kInf, me.a_min(), {*p}, {}, view.ego, me.params, env_, opts_.planning.bound).safe;
      } catch (const HorizonTooShort&) {
      }
      it->second = cutin_update(it->second, vehicles_[static_cast<std::size_t>(it->first)].a_applied, gap_ok, t);
      ++it;
    }
  }

  bool tick(long k) {
    const double dt = env_.dt_p;
    const double t = static_cast<double>(k) * dt;
    for (std::size_t i = 0; i < sc_.events.size(); ++i) {
      if (events_fired_[i] || sc_.events[i].t > t + kEventEps) continue;
      events_fired_[i] = true;
      apply_event(sc_.events[i], t);
    }

    const auto order = ordered();
    std::map<VehicleId, TickPlan> plans;
    std::vector<Envelope> sends;

    for (SimVehicle* v : order) {
      TickPlan& pl = plans[v->id];
      if (!v->member) {
        if (v->full_brake) pl.a_d = -kInf;
        else if (v->hold) pl.a_d = *v->hold;
        else pl.a_d = std::clamp(opts_.planning.gains.k_p * (v->target - v->x.v), v->params.a_dec, v->params.a_acc);
        pl.outcome.a_d = pl.outcome.nominal = pl.a_d;
        continue;
      }
      PlanningView view = view_of(*v, order, t, k);
      if (!v->cutins.empty()) update_cutins(*v, view, t);
      for (auto& p : view.preceding) {
        const auto it = v->cutins.find(p.id);
        if (it == v->cutins.end()) p.cutin.reset();
        else p.cutin = CutinAssumption{it->second.assumed_limit(env_.a_dec_cutin), it->second.remaining(t, env_.t_clear)};
      }
      pl.alerts_seen = static_cast<int>(view.alerts.size());

      const auto t0 = std::chrono::steady_clock::now();
      pl.outcome = planning_step(view, *v->proto, env_, opts_.planning);
      plan_ms_.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      pl.a_d = pl.outcome.a_d;

      for (auto& e : pl.outcome.sends) sends.push_back(std::move(e));
      store_predictions(*v, view, pl.a_d);
      if (sc_.log_safe_distance && view.direct_pred && !view.preceding.empty()) {
        PrecedingInfo p = view.preceding.front();
        const auto& ll = v->proto->consensus.leader_limits;
        if (auto it = ll.find(p.id); it != ll.end()) p.a_min_assumed = it->second.a;
        try {
          pl.safe_distance = safe_distance(view.ego, p, v->a_min(), v->params, env_, opts_.planning.bound);
        } catch (const HorizonTooShort&) {
        }
      }
    }

    const bool collided = advance(order, plans, t, k);

    if (opts_.record_log) {
      for (SimVehicle* v : order) {
        const TickPlan& pl = plans[v->id];
        StepRecord r;
        r.step = k;
        r.t = t;
        r.id = v->id;
        r.name = v->name;
        r.member = v->member;
        r.s = v->x.s;
        r.v = v->x.v;
        r.a_applied = v->a_applied;
        r.a_d = pl.a_d;
        r.nominal = pl.outcome.nominal;
        r.a_min_forced = v->a_min();
        r.fail_safe = pl.outcome.fail_safe;
        r.recap = pl.outcome.recap;
        r.transition = pl.outcome.transition;
        r.alert = pl.outcome.s_coll.has_value();
        r.alerts_seen = pl.alerts_seen;
        r.spec_ok = pl.outcome.spec_ok;
        r.safe_distance = pl.safe_distance;
        result_.log.push_back(std::move(r));
      }
    }
    for (SimVehicle* v : order) {
      if (!v->member) continue;
      const PlanningOutcome& o = plans[v->id].outcome;
      if (o.fail_safe) {
        ++summary().fail_safe_steps;
        fail_safe_inputs_.push_back(o.a_d);
      }
      if (o.recap) ++summary().recap_steps;
      if (o.s_coll) ++summary().alerts;
      if (!o.spec_ok) ++summary().spec_violations;
    }
    track_consensus(t);
    summary().steps = k + 1;
    summary().end_time = t + dt;

    deliver(std::move(sends), k);
    return !collided;
  }

  void store_predictions(SimVehicle& me, const PlanningView& view, double a_d) {
    const double a_min = me.a_min();
    me.predicted[me.id] = predict_interval(view.ego, a_d, a_d, a_min, me.params, env_);
    const auto& ll = me.proto->consensus.leader_limits;
    for (const auto& p : view.preceding) {
      double assumed = p.a_min_assumed;
      if (auto it = ll.find(p.id); it != ll.end()) assumed = it->second.a;
      const IntervalState front = predict_interval(p.meas, -kInf, kInf, assumed, p.params, env_);
      me.predicted[p.id] = {front.s - p.params.length, front.v};
    }
  }

  // Advances all vehicles one planning period in lockstep substeps.
  bool advance(const std::vector<SimVehicle*>& order, std::map<VehicleId, TickPlan>& plans, double t, long k) {
    const double dt = env_.dt_p;
    const int n = opts_.planning.bound.substeps;
    const double h = dt / n;
    std::vector<double> w(order.size());
    std::vector<VehicleState> before(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      w[i] = truncated_gaussian(env_.w, order[i]->disturbance);
      before[i] = order[i]->x;
    }
    bool collided = false;
    for (int j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < order.size(); ++i) {
        SimVehicle& v = *order[i];
        const TrueLimits lim{&v.params, &env_, cond_, v.a_min(), t, nullptr};
        v.x = model_substep(v.x, j * h, h, plans[v.id].a_d, w[i], v.params.v_max, lim);
      }
      for (std::size_t i = 1; i < order.size(); ++i) {
        const SimVehicle& lead = *order[i - 1];
        const SimVehicle& fol = *order[i];
        const double gap = lead.rear() - fol.x.s;
        auto [it, fresh] = summary().min_gaps.try_emplace({lead.name, fol.name}, gap);
        if (!fresh) it->second = std::min(it->second, gap);
        if (gap < 0.0 && !collided) {
          collided = true;
          summary().collisions.push_back({k, t + (j + 1) * h, fol.name, lead.name});
        }
      }
    }
    for (std::size_t i = 0; i < order.size(); ++i) order[i]->a_applied = (order[i]->x.v - before[i].v) / dt;
    return collided;
  }

  void deliver(std::vector<Envelope> sends, long k) {
    std::vector<Envelope> addressed;
    for (auto& e : sends) {
      if (e.receiver >= 0) {
        addressed.push_back(std::move(e));
        continue;
      }
      const SimVehicle& from = vehicles_[static_cast<std::size_t>(e.sender)];
      const bool both_ways = std::holds_alternative<ConsensusSync>(e.payload);
      for (const auto& o : vehicles_) {
        if (!o.alive || o.id == from.id) continue;
        const bool behind = o.x.s < from.x.s && from.rear() - o.x.s <= env_.s_sensor;
        const bool ahead = o.x.s > from.x.s && o.rear() - from.x.s <= env_.s_sensor;
        if (both_ways ? (o.member && (behind || ahead)) : behind) {
          Envelope c = e;
          c.receiver = o.id;
          addressed.push_back(std::move(c));
        }
      }
    }
    for (const auto& e : channel_.step(std::move(addressed), k)) {
      SimVehicle& to = vehicles_[static_cast<std::size_t>(e.receiver)];
      if (to.alive && vehicles_[static_cast<std::size_t>(e.sender)].alive) to.mb.ingest(e);
    }
  }

  void track_consensus(double t) {
    std::vector<double> forced;
    for (const auto& v : vehicles_)
      if (v.alive && v.member) forced.push_back(v.proto->consensus.a_min_forced);
    if (forced.empty()) return;
    const auto [lo, hi] = std::minmax_element(forced.begin(), forced.end());
    const double spread = *hi - *lo;
    const double mean = std::accumulate(forced.begin(), forced.end(), 0.0) / static_cast<double>(forced.size());
    if (!summary().convergence_time && spread < kConvergedSpread) summary().convergence_time = t;
    if (t + env_.dt_p <= depart_time_ + kEventEps) {
      summary().spread_before_departure = spread;
      summary().forced_mean_before_departure = mean;
    }
    summary().spread_end = spread;
    summary().forced_mean_end = mean;
  }

  void finish() {
    Summary& s = summary();
    if (!fail_safe_inputs_.empty()) s.median_fail_safe_input = median(fail_safe_inputs_);
    s.plan_ms_p99 = percentile(plan_ms_, 0.99);
    s.plan_ms_max = plan_ms_.empty() ? 0.0 : *std::max_element(plan_ms_.begin(), plan_ms_.end());
    if (!std::isfinite(depart_time_)) {
      s.spread_before_departure.reset();
      s.forced_mean_before_departure.reset();
    }
    for (const auto& v : vehicles_) {
      if (!v.proto) continue;
      const ConsensusStats& c = v.proto->consensus.stats;
      s.consensus.steps += c.steps;
      s.consensus.candidate_resets += c.candidate_resets;
      s.consensus.adoptions_weaker += c.adoptions_weaker;
      s.consensus.adoptions_confirmed += c.adoptions_confirmed;
      s.consensus.transitions += c.transitions;
      s.consensus.candidate_above_forced += c.candidate_above_forced;
      s.consensus.forced_weakened += c.forced_weakened;
      s.consensus.candidate_dropped_early += c.candidate_dropped_early;
      s.consensus.unsafe_confirmation += c.unsafe_confirmation;
      s.consensus.unsafe_forced_limit += c.unsafe_forced_limit;
    }
  }

  Summary& summary() { return result_.summary; }

  Scenario sc_;
  SimOptions opts_;
  EnvParams env_;
  Conditions cond_;
  std::shared_ptr<const InclineProfile> profile_;
  Channel channel_;
  std::deque<SimVehicle> vehicles_;
  std::vector<bool> events_fired_;
  double depart_time_{kInf};
  std::vector<double> plan_ms_;
  std::vector<double> fail_safe_inputs_;
  RunResult result_;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

}  // namespace

RunResult run(const Scenario& sc, const SimOptions& opts) { return Simulation(sc, opts).run(); }

void write_steps_csv(std::ostream& os, const std::vector<StepRecord>& log) {
  os << "step,t,vehicle,name,member,s,v,a_applied,a_d,nominal,a_min_forced,fail_safe,recap,transition,alert,"
        "alerts_seen,spec_ok,safe_distance\n";
  for (const auto& r : log) {
    os << r.step << ',' << num(r.t) << ',' << r.id << ',' << r.name << ',' << r.member << ',' << num(r.s) << ','
       << num(r.v) << ',' << num(r.a_applied) << ',' << num(r.a_d) << ',' << num(r.nominal) << ','
       << num(r.a_min_forced) << ',' << r.fail_safe << ',' << r.recap << ',' << r.transition << ',' << r.alert << ','
       << r.alerts_seen << ',' << r.spec_ok << ',' << (std::isnan(r.safe_distance) ? "" : num(r.safe_distance))
       << '\n';
  }
}

void write_summary_csv(std::ostream& os, const Summary& s) {
  auto opt = [](const std::optional<double>& x) { return x ? num(*x) : std::string(); };
  os << "metric,value\n";
  os << "steps," << s.steps << '\n';
  os << "end_time," << num(s.end_time) << '\n';
  os << "collisions," << s.collisions.size() << '\n';
  for (const auto& c : s.collisions)
    os << "collision:" << c.follower << "->" << c.leader << ",step=" << c.step << " t=" << num(c.t) << '\n';
  for (const auto& [pair, gap] : s.min_gaps) os << "min_gap:" << pair.second << "->" << pair.first << ',' << num(gap) << '\n';
  os << "convergence_time," << opt(s.convergence_time) << '\n';
  os << "spread_before_departure," << opt(s.spread_before_departure) << '\n';
  os << "forced_mean_before_departure," << opt(s.forced_mean_before_departure) << '\n';
  os << "spread_end," << num(s.spread_end) << '\n';
  os << "forced_mean_end," << num(s.forced_mean_end) << '\n';
  os << "fail_safe_steps," << s.fail_safe_steps << '\n';
  os << "median_fail_safe_input," << opt(s.median_fail_safe_input) << '\n';
  os << "recap_steps," << s.recap_steps << '\n';
  os << "alerts," << s.alerts << '\n';
  os << "spec_violations," << s.spec_violations << '\n';
  os << "consensus_invariant_violations,"
     << s.consensus.candidate_above_forced + s.consensus.forced_weakened + s.consensus.candidate_dropped_early +
            s.consensus.unsafe_confirmation + s.consensus.unsafe_forced_limit
     << '\n';
}

void print_summary(std::ostream& os, const Summary& s) {
  os << "steps: " << s.steps << "  end: " << num(s.end_time) << " s\n";
  if (s.collisions.empty()) os << "collisions: 0\n";
  for (const auto& c : s.collisions)
    os << "COLLISION at step " << c.step << " (t=" << num(c.t) << " s): " << c.follower << " hit " << c.leader
       << '\n';
  for (const auto& [pair, gap] : s.min_gaps)
    os << "min gap " << pair.second << " -> " << pair.first << ": " << num(gap) << " m\n";
  if (s.convergence_time) os << "consensus converged at t=" << num(*s.convergence_time) << " s\n";
  os << "fail-safe steps: " << s.fail_safe_steps;
  if (s.median_fail_safe_input) os << "  median input: " << num(*s.median_fail_safe_input) << " m/s^2";
  os << "\nalerts: " << s.alerts << "  spec violations: " << s.spec_violations << '\n';
  os << "planning ms p99: " << num(s.plan_ms_p99) << "  max: " << num(s.plan_ms_max) << '\n';
}

}  // namespace platoon
