#include "platoon/consensus.hpp"

#include <algorithm>
#include <cmath>

namespace platoon {

std::vector<double> TransitionState::default_jerks() {
  std::vector<double> j;
  for (int k = 0; k < 10; ++k) j.push_back(-1.0 - k);
  return j;
}

double TransitionState::jerk(int k) const {
  if (jerk_seq.empty()) return -1.0;
  return jerk_seq[std::min<std::size_t>(static_cast<std::size_t>(k), jerk_seq.size() - 1)];
}

double transition_bound(TransitionState& ts, double last_applied_a, double dt_p) {
  if (!ts.active) {
    ts.c = -1;
    ts.a_trans = last_applied_a;
    return kInf;
  }
  ts.c += 1;
  ts.a_trans += dt_p * ts.jerk(ts.c);
  return ts.a_trans;
}

namespace {

bool contains(const std::vector<VehicleId>& v, VehicleId id) { return std::find(v.begin(), v.end(), id) != v.end(); }

std::vector<LimitAssumption> assumptions(const ConsensusState& st, const std::vector<VehicleId>& preceding) {
  std::vector<LimitAssumption> y;
  y.reserve(preceding.size());
  for (VehicleId j : preceding) {
    const auto it = st.leader_limits.find(j);
    y.push_back({j, it != st.leader_limits.end() ? std::optional<double>(it->second.a) : std::nullopt});
  }
  return y;
}

// Comparisons with an absent candidate are false.
bool greater(const std::optional<double>& a, const std::optional<double>& b) { return a && b && *a > *b; }

}  // namespace

ConsensusResult safe_consensus(ConsensusState& st, const ConsensusStepInput& in, const ConsensusInbox& inbox,
                               const ConsensusVerify& verify) {
  const double t = in.t;
  ++st.stats.steps;
  st.transition.active = false;

  // Block 1
  std::optional<double> cand_old = st.a_cand;
  if (in.a_min_new < st.a_min_forced) {
    st.a_cand = in.a_min_new;
  } else {
    if (st.a_cand) ++st.stats.candidate_resets;
    st.a_cand.reset();
    st.t_accept = t;
    if (verify(in.a_min_new, assumptions(st, in.preceding))) {
      if (in.a_min_new < st.a_min_forced) ++st.stats.forced_weakened;
      if (in.a_min_new != st.a_min_forced) ++st.stats.adoptions_weaker;
      st.a_min_forced = in.a_min_new;
    } else {
      st.transition.active = true;
    }
  }
  if (in.check_invariants && st.a_cand && *st.a_cand > st.a_min_forced) ++st.stats.candidate_above_forced;

  // Block 2
  for (VehicleId l : in.leaders) {
    const auto msg = inbox.leader_limits.find(l);
    if (msg == inbox.leader_limits.end()) continue;
    auto& stored = st.leader_limits.try_emplace(l, LabelledLimit{-12.0, -1.0}).first->second;
    bool safe = true;
    if (msg->second.a < stored.a) {
      std::vector<LimitAssumption> y{{l, msg->second.a}};
      safe = verify(st.a_min_forced, y);
    }
    if (safe) {
      if (in.check_invariants && msg->second.a != stored.a) {
        std::vector<LimitAssumption> before{{l, stored.a}};
        std::vector<LimitAssumption> after{{l, msg->second.a}};
        if (verify(st.a_min_forced, before) && !verify(st.a_min_forced, after)) ++st.stats.unsafe_forced_limit;
      }
      stored = msg->second;
    } else {
      st.transition.active = true;
    }
  }

  // Block 3
  bool all_confirmed = true;
  double a_conf = st.a_cand.value_or(-kInf);
  for (VehicleId f : in.followers) {
    const auto msg = inbox.confirmations.find(f);
    if (msg != inbox.confirmations.end()) st.follower_confirms[f] = msg->second;
    const auto it = st.follower_confirms.find(f);
    const LabelledLimit c = it != st.follower_confirms.end() ? it->second : LabelledLimit{0.0, -1.0};
    if (c.label >= st.t_accept && c.a <= st.a_min_forced) {
      a_conf = std::max(a_conf, c.a);
    } else {
      all_confirmed = false;
    }
  }
  for (auto it = st.follower_confirms.begin(); it != st.follower_confirms.end();) {
    if (!contains(in.followers, it->first)) it = st.follower_confirms.erase(it);
    else ++it;
  }
  if (st.a_cand && all_confirmed) {
    if (a_conf > st.a_min_forced) ++st.stats.forced_weakened;
    if (in.check_invariants && a_conf != st.a_min_forced) {
      const auto y = assumptions(st, in.preceding);
      if (verify(st.a_min_forced, y) && !verify(a_conf, y)) ++st.stats.unsafe_confirmation;
    }
    if (a_conf != st.a_min_forced) ++st.stats.adoptions_confirmed;
    st.a_min_forced = a_conf;
    if (*st.a_cand == st.a_min_forced) {
      st.a_cand.reset();
      st.t_accept = t;
    }
  }

  // Block 4
  ConsensusResult out;
  for (VehicleId l : in.leaders) {
    const auto it = st.leader_limits.find(l);
    if (it != st.leader_limits.end() && it->second.label >= 0.0) out.outbox.confirmations.emplace_back(l, it->second);
  }
  if (greater(st.a_cand, cand_old)) st.t_accept = t;
  out.outbox.broadcast = {st.a_cand.value_or(st.a_min_forced), t};

  if (in.check_invariants) {
    if (st.a_cand && *st.a_cand > st.a_min_forced) ++st.stats.candidate_above_forced;
    if (cand_old && !st.a_cand && st.t_accept != t) ++st.stats.candidate_dropped_early;
  }
  if (st.transition.active) ++st.stats.transitions;
  out.a_trans_bound = transition_bound(st.transition, in.last_applied_a, in.dt_p);
  return out;
}

void ReferenceEntity::receive(const ConsensusSync& m) {
  if (m.epoch > epoch_) {
    epoch_ = m.epoch;
    estimate_ = std::max(own_, m.value);
  } else if (m.epoch == epoch_) {
    estimate_ = std::max(estimate_, m.value);
  }
}

double ReferenceEntity::next_limit() {
  const double diff = estimate_ - output_;
  output_ = std::abs(diff) < snap_ ? estimate_ : output_ + rate_ * diff;
  return output_;
}

void ReferenceEntity::reset() {
  ++epoch_;
  estimate_ = own_;
}

double reference_entity_step(ReferenceEntity& e, const std::vector<ConsensusSync>& peers) {
  for (const auto& m : peers) e.receive(m);
  return e.next_limit();
}

}  // namespace platoon
