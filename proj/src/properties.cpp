#include "platoon/properties.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "platoon/consensus.hpp"
#include "platoon/controllers.hpp"
#include "platoon/network.hpp"

namespace platoon {

namespace {

constexpr long kRoundsPerSchedule = 250;
constexpr int kCaseAttempts = 200;

Rng case_rng(std::uint64_t seed, long index, std::uint32_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), salt};
  return Rng(seq);
}

double uni(Rng& r, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(r); }
double uni(Rng& r, Interval i) { return uni(r, i.lo, i.hi); }
bool coin(Rng& r, double p) { return std::bernoulli_distribution(p)(r); }
int pick(Rng& r, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(r); }

// Either end of the interval or a uniform draw inside it.
double adversarial(Rng& r, Interval i) {
  const int k = pick(r, 0, 3);
  return k == 0 ? i.lo : k == 1 ? i.hi : uni(r, i);
}

VehicleParams random_preset(Rng& r) {
  static const VehicleParams all[] = {presets::p0(), presets::p1(), presets::p2(), presets::p3(), presets::p4()};
  return all[pick(r, 0, 4)];
}

Interval around(Rng& r, double truth, double max_width) {
  const double w = uni(r, 0.0, max_width);
  const double lo = truth - uni(r, 0.0, w);
  return {lo, lo + w};
}

IntervalState measured(Rng& r, VehicleState x, double v_max) {
  IntervalState m{around(r, x.s, 0.5), around(r, x.v, 0.2)};
  m.v = clamp_below(m.v, 0.0);
  m.v.hi = std::min(m.v.hi, v_max);
  m.v.lo = std::min(m.v.lo, m.v.hi);
  return m;
}

std::shared_ptr<const InclineProfile> random_profile(Rng& r, Interval alpha, double s0) {
  std::vector<std::pair<double, double>> pts;
  double s = s0 - 100.0;
  for (int i = 0, n = pick(r, 2, 7); i < n; ++i) {
    pts.emplace_back(s, adversarial(r, alpha));
    s += uni(r, 20.0, 400.0);
  }
  return std::make_shared<const InclineProfile>(pts);
}

Conditions true_conditions(Rng& r, const EnvParams& env, const InclineProfile* profile) {
  Conditions c;
  c.rho = adversarial(r, env.rho);
  c.v_wind = adversarial(r, env.v_wind);
  c.g = env.g;
  c.profile = profile;
  c.alpha = adversarial(r, env.alpha);
  return c;
}

struct Outcome {
  std::optional<std::string> violation;
  std::map<std::string, long> counters;
};

// ---------------------------------------------------------------------------

Outcome monotonicity_case(const FuzzConfig& cfg, long index) {
  Rng r = case_rng(cfg.seed, index, 1);
  Outcome out;
  EnvParams env;
  const VehicleParams p = random_preset(r);
  const VehicleState x0{uni(r, 0.0, 100.0), uni(r, 0.0, p.v_max)};
  const IntervalState meas = measured(r, x0, p.v_max);

  const auto profile = random_profile(r, env.alpha, x0.s);
  if (coin(r, 0.5)) env.route_profile = profile;
  const Conditions cond = true_conditions(r, env, profile.get());

  InputPlan plan;
  double a = uni(r, p.a_dec - 1.0, p.a_acc + 1.0);
  for (int k = 0, n = pick(r, 1, 40); k < n; ++k) {
    plan.slots.push_back(a);
    if (coin(r, 0.3)) a -= uni(r, 0.0, 2.0);
  }

  std::optional<CutinAssumption> cutin;
  CutinTracker tracker;
  if (coin(r, 0.25)) {
    const double rem = uni(r, 0.0, env.t_clear);
    tracker = CutinTracker::start(rem - env.t_clear, env.a_dec_cutin);
    cutin = CutinAssumption{tracker.assumed_limit(env.a_dec_cutin), rem};
    ++out.counters["cutin_trials"];
  }

  BoundOptions opts;
  opts.require_closure = false;
  opts.horizon_cap = 2000;
  const BoundTrajectory lower = lower_pos(meas, plan, p.a_dec, p, env, opts, cutin);
  const BoundTrajectory upper = cfg.inject_fault
                                    ? upper_pos(IntervalState::exact(meas.lower()), plan, p.a_dec, p, env, opts)
                                    : upper_pos(meas, plan, p.a_dec, p, env, opts);

  const TrueLimits lim{&p, &env, cond, p.a_dec, 0.0, cutin ? &tracker : nullptr};
  const double h = env.dt_p / opts.substeps;
  const std::size_t n = std::max(lower.size(), upper.size()) + 5;
  VehicleState x = x0;
  const bool extremes = coin(r, 0.5);
  for (std::size_t k = 0; k < n; ++k) {
    const double lo = lower.at(k) + p.length;
    const double hi = upper.at(k);
    if (!(lo <= x.s + 1e-9) || (!cutin && !(x.s <= hi + 1e-9))) {
      std::ostringstream os;
      os << "k=" << k << " lower+l=" << lo << " truth=" << x.s << " upper=" << hi;
      out.violation = os.str();
      return out;
    }
    for (int j = 0; j < opts.substeps; ++j) {
      const double w = extremes ? (coin(r, 0.5) ? env.w.lo : env.w.hi) : truncated_gaussian(env.w, r);
      x = model_substep(x, k * env.dt_p + j * h, h, plan.at(k), w, p.v_max, lim);
    }
  }
  out.counters["grid_points"] += static_cast<long>(n);
  return out;
}

// ---------------------------------------------------------------------------

struct SoundnessCase {
  EnvParams env;
  VehicleParams ego_params;
  IntervalState ego;
  double a_d{0.0};
  std::vector<PrecedingInfo> preds;
};

// The injected fault lets the verifier believe the ego brakes twice as hard.
double verified_a_min(const SoundnessCase& c, bool fault) { return (fault ? 2.0 : 1.0) * c.ego_params.a_dec; }

bool faulty_verify(const SoundnessCase& c, bool fault) {
  try {
    const LimitSequence lim = limit_sequence(c.preds, {}, c.ego, c.env);
    const BoundTrajectory up =
        upper_pos(c.ego, InputPlan::hold_then_brake(c.a_d), verified_a_min(c, fault), c.ego_params, c.env);
    return stays_behind(up, lim);
  } catch (const HorizonTooShort&) {
    return false;
  }
}

Outcome soundness_case(const FuzzConfig& cfg, long index) {
  Rng r = case_rng(cfg.seed, index, 2);
  Outcome out;
  std::optional<SoundnessCase> found;
  for (int attempt = 0; attempt < kCaseAttempts && !found; ++attempt) {
    SoundnessCase c;
    c.ego_params = random_preset(r);
    const VehicleState ego_x{0.0, uni(r, 0.0, c.ego_params.v_max)};
    c.ego = measured(r, ego_x, c.ego_params.v_max);
    c.a_d = uni(r, c.ego_params.a_dec, c.ego_params.a_acc);
    double front = ego_x.s;
    for (int i = 0, n = pick(r, 1, 2); i < n; ++i) {
      PrecedingInfo p;
      p.id = i + 1;
      p.params = coin(r, 0.2) ? presets::worst_case() : random_preset(r);
      p.a_min_assumed = p.params.a_dec;
      const VehicleState rear{0.0, uni(r, 0.0, std::min(p.params.v_max, 30.0))};
      p.meas = {Interval::point(0.0), around(r, rear.v, 0.2)};
      p.meas.v = clamp_below(p.meas.v, 0.0);
      const double sd = safe_distance(c.ego, p, verified_a_min(c, cfg.inject_fault), c.ego_params, c.env);
      const double rear_pos = std::max(front, c.ego.s.hi + sd + uni(r, -1.0, 4.0));
      p.meas.s = around(r, rear_pos, 0.5) + p.params.length;
      front = p.meas.s.hi + 1.0;
      c.preds.push_back(p);
    }
    ++out.counters["candidates"];
    if (faulty_verify(c, cfg.inject_fault)) found = c;
  }
  if (!found) {
    out.violation = "no safe-verdict case within the attempt budget";
    return out;
  }
  const SoundnessCase& c = *found;
  ++out.counters["cases"];

  const double dt = c.env.dt_p;
  const int sub = 10;
  const double h = dt / sub;
  for (int roll = 0; roll < cfg.rollouts; ++roll) {
    ++out.counters["rollouts"];
    const auto profile = random_profile(r, c.env.alpha, 0.0);
    const Conditions ego_cond = true_conditions(r, c.env, coin(r, 0.5) ? profile.get() : nullptr);
    VehicleState ego{adversarial(r, c.ego.s), adversarial(r, c.ego.v)};
    const TrueLimits ego_lim{&c.ego_params, &c.env, ego_cond, c.ego_params.a_dec, 0.0, nullptr};

    struct Pred {
      VehicleState x;
      TrueLimits lim;
      std::vector<double> inputs;
      double length;
    };
    std::vector<Pred> preds;
    for (const auto& p : c.preds) {
      Pred q{{adversarial(r, p.meas.s), adversarial(r, p.meas.v)},
             {&p.params, &c.env, true_conditions(r, c.env, coin(r, 0.5) ? profile.get() : nullptr), p.a_min_assumed,
              0.0, nullptr},
             {},
             p.params.length};
      if (!coin(r, 0.3)) {
        for (int k = 0, n = pick(r, 1, 60); k < n; ++k) q.inputs.push_back(coin(r, 0.2) ? -kInf : uni(r, -12.0, 4.0));
      }
      preds.push_back(q);
    }
    const bool extremes = coin(r, 0.5);
    auto draw_w = [&] { return extremes ? (coin(r, 0.5) ? c.env.w.lo : c.env.w.hi) : truncated_gaussian(c.env.w, r); };

    for (int k = 0; k < 3000; ++k) {
      const double a_ego = k == 0 ? c.a_d : -kInf;
      const double w_ego = draw_w();
      std::vector<double> w_pred;
      for (std::size_t i = 0; i < preds.size(); ++i) w_pred.push_back(draw_w());
      for (int j = 0; j < sub; ++j) {
        const double tau = k * dt + j * h;
        ego = model_substep(ego, tau, h, a_ego, w_ego, c.ego_params.v_max, ego_lim);
        for (std::size_t i = 0; i < preds.size(); ++i) {
          Pred& q = preds[i];
          const double a = static_cast<std::size_t>(k) < q.inputs.size() ? q.inputs[static_cast<std::size_t>(k)] : -kInf;
          q.x = model_substep(q.x, tau, h, a, w_pred[i], q.lim.params->v_max, q.lim);
          if (ego.s > q.x.s - q.length) {
            std::ostringstream os;
            os << "rollout " << roll << " t=" << tau + h << " ego front " << ego.s << " passes pred " << i + 1
               << " rear " << q.x.s - q.length;
            out.violation = os.str();
            return out;
          }
        }
      }
      if (ego.v <= 0.0) break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome minimality_case(const FuzzConfig& cfg, long index) {
  Rng r = case_rng(cfg.seed, index, 3);
  Outcome out;
  const EnvParams env;
  for (int attempt = 0; attempt < kCaseAttempts; ++attempt) {
    ++out.counters["candidates"];
    const VehicleParams p = random_preset(r);
    const IntervalState ego = measured(r, {0.0, uni(r, 0.0, p.v_max)}, p.v_max);
    PrecedingInfo pred;
    pred.id = 1;
    pred.params = random_preset(r);
    pred.a_min_assumed = uni(r, pred.params.a_dec, -1.0);
    pred.meas = {Interval::point(0.0), clamp_below(around(r, uni(r, 0.0, 30.0), 0.2), 0.0)};
    const double sd = safe_distance(ego, pred, p.a_dec, p, env);
    pred.meas.s = around(r, ego.s.hi + sd * uni(r, 0.5, 1.5) + pred.params.length, 0.5);
    std::vector<double> alerts;
    if (coin(r, 0.2)) alerts.push_back(ego.s.hi + uni(r, 10.0, 150.0));

    const LimitSequence lim = limit_sequence({pred}, alerts, ego, env);
    const FailSafeConfig fs = default_bracket(ego, p.a_dec, p, env, 0.05);
    std::optional<double> a = fail_safe(lim, ego, p.a_dec, p, env, fs);
    if (!a) {
      ++out.counters["no_safe_input"];
      continue;
    }
    ++out.counters["cases"];
    if (cfg.inject_fault) *a += 3.0 * fs.a_tol;
    auto safe = [&](double u) {
      try {
        return plan_safe(InputPlan::hold_then_brake(u), lim, ego, p.a_dec, p, env);
      } catch (const HorizonTooShort&) {
        return false;
      }
    };
    const double above = *a + 2.0 * fs.a_tol;
    std::ostringstream os;
    if (!safe(*a)) os << "returned input " << *a << " is unsafe";
    else if (above <= fs.a_search_hi && safe(above)) os << "input " << above << " is safe, returned " << *a;
    if (!os.str().empty()) out.violation = os.str();
    return out;
  }
  out.violation = "no case with a safe input within the attempt budget";
  return out;
}

// ---------------------------------------------------------------------------

// Random walk of proposals, never stronger than the physical limit.
class RandomEntity : public ConsensusEntity {
 public:
  RandomEntity(double physical, Rng& r) : physical_(physical), value_(physical), rng_(r) {}
  double next_limit() override {
    if (coin(rng_, 0.05)) value_ = uni(rng_, physical_, std::min(-1.0, physical_ + 5.0));
    return value_;
  }
  bool converged() const override { return true; }

 private:
  double physical_;
  double value_;
  Rng& rng_;
};

Outcome consensus_schedule(const FuzzConfig& cfg, long schedule, long rounds, long* failing_round) {
  Rng r = case_rng(cfg.seed, schedule, 4);
  Outcome out;
  const int n = pick(r, 2, 5);
  ChannelConfig cc;
  cc.drop_prob = cfg.drop ? *cfg.drop : uni(r, 0.0, 0.5);
  cc.delay_max = cfg.delay_max ? *cfg.delay_max : pick(r, 0, 10);
  cc.duplicate_prob = uni(r, 0.0, 0.2);
  cc.seed = r();
  Channel channel(cc);

  std::vector<ConsensusState> states;
  std::vector<std::unique_ptr<RandomEntity>> entities;
  std::vector<double> slack;
  std::vector<Mailbox> boxes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double phys = uni(r, -10.0, -4.0);
    states.emplace_back(phys);
    entities.push_back(std::make_unique<RandomEntity>(phys, r));
    slack.push_back(uni(r, 0.0, 8.0));
    if (i > 0) states.back().add_leader(i - 1);
  }

  const double dt = 0.1;
  for (long round = 0; round < rounds; ++round) {
    const double t = static_cast<double>(round) * dt;
    std::vector<Envelope> sends;
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      ConsensusState& st = states[ui];
      ConsensusStepInput in;
      in.t = t;
      in.dt_p = dt;
      in.check_invariants = true;
      in.a_min_new = entities[ui]->next_limit();
      in.last_applied_a = 0.0;
      ConsensusInbox inbox;
      if (i > 0) {
        in.preceding = {i - 1};
        in.leaders = {i - 1};
        if (const auto* m = boxes[ui].get<BrakingLimit>(i - 1)) inbox.leader_limits[i - 1] = {m->a, m->label};
      }
      if (i + 1 < n) {
        in.followers = {i + 1};
        if (const auto* m = boxes[ui].get<Confirmation>(i + 1)) inbox.confirmations[i + 1] = {m->a, m->label};
      }
      // Safe while the ego brakes at least `slack` harder than its assumed leader.
      const ConsensusVerify verify = [&, i](double a_ego, const std::vector<LimitAssumption>& y) {
        for (const auto& a : y) {
          if (a_ego > a.a_min.value_or(-12.0) + slack[static_cast<std::size_t>(i)]) return false;
        }
        return true;
      };
      const ConsensusResult res = safe_consensus(st, in, inbox, verify);
      for (const auto& [l, lim] : res.outbox.confirmations)
        sends.push_back({i, l, t, round, Confirmation{lim.a, lim.label}});
      if (i + 1 < n) {
        const double told = res.outbox.broadcast.a + (cfg.inject_fault ? 0.5 : 0.0);
        sends.push_back({i, i + 1, t, round, BrakingLimit{told, res.outbox.broadcast.label}});
      }

      // Every stored leader limit must stay at or below the leader's actual limit.
      for (int f = 1; f < n; ++f) {
        const auto& stored = states[static_cast<std::size_t>(f)].leader_limits.at(f - 1);
        const double actual = states[static_cast<std::size_t>(f - 1)].a_min_forced;
        if (stored.a > actual) {
          std::ostringstream os;
          os << "round " << round << ": vehicle " << f << " stores " << stored.a << " for leader " << f - 1
             << " whose limit is " << actual;
          out.violation = os.str();
          *failing_round = round;
          return out;
        }
      }
    }
    for (const auto& e : channel.step(std::move(sends), round)) boxes[static_cast<std::size_t>(e.receiver)].ingest(e);
    ++out.counters["rounds"];
  }

  long structural = 0;
  for (const auto& st : states) {
    const ConsensusStats& s = st.stats;
    structural += s.candidate_above_forced + s.forced_weakened + s.candidate_dropped_early + s.unsafe_confirmation +
                  s.unsafe_forced_limit;
    out.counters["adoptions_weaker"] += s.adoptions_weaker;
    out.counters["adoptions_confirmed"] += s.adoptions_confirmed;
    out.counters["transition_steps"] += s.transitions;
  }
  if (structural > 0) {
    out.violation = std::to_string(structural) + " structural invariant violations in schedule " + std::to_string(schedule);
    *failing_round = rounds - 1;
  }
  return out;
}

// ---------------------------------------------------------------------------

void parallel_for(long n, int threads, const std::function<void(long)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (long i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct Aggregate {
  std::mutex mu;
  FuzzReport report;

  void add(long iteration, const Outcome& o) {
    std::lock_guard<std::mutex> lock(mu);
    for (const auto& [k, v] : o.counters) report.counters[k] += v;
    if (!o.violation) return;
    ++report.violations;
    if (!report.first || iteration < report.first->iteration) report.first = Violation{iteration, *o.violation};
  }
};

Outcome run_one(const FuzzConfig& cfg, long index) {
  switch (cfg.suite) {
    case Suite::Monotonicity: return monotonicity_case(cfg, index);
    case Suite::VerifySoundness: return soundness_case(cfg, index);
    case Suite::FailsafeMinimality: return minimality_case(cfg, index);
    case Suite::ConsensusInvariance: break;
  }
  return {};
}

}  // namespace

std::optional<Suite> suite_by_name(std::string_view name) {
  for (Suite s : {Suite::Monotonicity, Suite::VerifySoundness, Suite::FailsafeMinimality, Suite::ConsensusInvariance})
    if (name == suite_name(s)) return s;
  return std::nullopt;
}

const char* suite_name(Suite s) {
  switch (s) {
    case Suite::Monotonicity: return "monotonicity";
    case Suite::VerifySoundness: return "verify-soundness";
    case Suite::FailsafeMinimality: return "failsafe-minimality";
    case Suite::ConsensusInvariance: return "consensus-invariance";
  }
  return "?";
}

int thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PLATOON_SAFE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

FuzzReport run_suite(const FuzzConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  Aggregate agg;
  agg.report.suite = cfg.suite;
  agg.report.iterations = cfg.iterations;
  const int threads = thread_count(cfg.threads);
  if (cfg.suite == Suite::ConsensusInvariance) {
    const long schedules = (cfg.iterations + kRoundsPerSchedule - 1) / kRoundsPerSchedule;
    parallel_for(schedules, threads, [&](long s) {
      const long rounds = std::min(kRoundsPerSchedule, cfg.iterations - s * kRoundsPerSchedule);
      long failing = 0;
      const Outcome o = consensus_schedule(cfg, s, rounds, &failing);
      agg.add(s * kRoundsPerSchedule + failing, o);
    });
  } else {
    parallel_for(cfg.iterations, threads, [&](long i) { agg.add(i, run_one(cfg, i)); });
  }
  agg.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return agg.report;
}

FuzzReport replay(const FuzzConfig& cfg, long iteration) {
  Aggregate agg;
  agg.report.suite = cfg.suite;
  agg.report.iterations = 1;
  if (cfg.suite == Suite::ConsensusInvariance) {
    const long s = iteration / kRoundsPerSchedule;
    long failing = 0;
    const Outcome o = consensus_schedule(cfg, s, iteration % kRoundsPerSchedule + 1, &failing);
    agg.add(s * kRoundsPerSchedule + failing, o);
  } else {
    agg.add(iteration, run_one(cfg, iteration));
  }
  return agg.report;
}

void write_reproducer(std::ostream& os, const FuzzConfig& cfg, const Violation& v) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "suite" << YAML::Value << suite_name(cfg.suite);
  e << YAML::Key << "seed" << YAML::Value << cfg.seed;
  e << YAML::Key << "iteration" << YAML::Value << v.iteration;
  e << YAML::Key << "inject_fault" << YAML::Value << cfg.inject_fault;
  if (cfg.drop) e << YAML::Key << "drop" << YAML::Value << *cfg.drop;
  if (cfg.delay_max) e << YAML::Key << "delay_max" << YAML::Value << *cfg.delay_max;
  e << YAML::Key << "rollouts" << YAML::Value << cfg.rollouts;
  e << YAML::Key << "violation" << YAML::Value << v.detail;
  e << YAML::EndMap;
  os << e.c_str() << '\n';
}

std::pair<FuzzConfig, long> read_reproducer(const std::string& path) {
  YAML::Node n;
  try {
    n = YAML::LoadFile(path);
  } catch (const YAML::Exception& ex) {
    throw std::runtime_error(path + ": " + ex.what());
  }
  if (!n["suite"] || !n["seed"] || !n["iteration"]) throw std::runtime_error(path + ": not a reproducer file");
  FuzzConfig cfg;
  const auto suite = suite_by_name(n["suite"].as<std::string>());
  if (!suite) throw std::runtime_error(path + ": unknown suite '" + n["suite"].as<std::string>() + "'");
  cfg.suite = *suite;
  cfg.seed = n["seed"].as<std::uint64_t>();
  cfg.inject_fault = n["inject_fault"] && n["inject_fault"].as<bool>();
  if (n["drop"]) cfg.drop = n["drop"].as<double>();
  if (n["delay_max"]) cfg.delay_max = n["delay_max"].as<int>();
  if (n["rollouts"]) cfg.rollouts = n["rollouts"].as<int>();
  return {cfg, n["iteration"].as<long>()};
}

}  // namespace platoon
