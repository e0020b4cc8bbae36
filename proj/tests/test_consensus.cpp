#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "platoon/consensus.hpp"

using namespace platoon;

namespace {

const ConsensusVerify always_safe = [](double, const std::vector<LimitAssumption>&) { return true; };
const ConsensusVerify never_safe = [](double, const std::vector<LimitAssumption>&) { return false; };

ConsensusStepInput step_at(double t, double a_new) {
  ConsensusStepInput in;
  in.t = t;
  in.a_min_new = a_new;
  in.check_invariants = true;
  return in;
}

}  // namespace

TEST_CASE("transition bound accumulates the jerk sequence") {
  TransitionState ts;
  CHECK(transition_bound(ts, 0.7, 0.1) == kInf);
  CHECK(ts.c == -1);
  CHECK(ts.a_trans == 0.7);

  ts.a_trans = 0.0;
  ts.active = true;
  CHECK(transition_bound(ts, 0.0, 0.1) == doctest::Approx(-0.1));
  CHECK(transition_bound(ts, 0.0, 0.1) == doctest::Approx(-0.3));

  ts.active = false;
  CHECK(transition_bound(ts, -2.0, 0.1) == kInf);
  ts.active = true;
  CHECK(transition_bound(ts, 5.0, 0.1) == doctest::Approx(-2.1));
}

TEST_CASE("default jerks are negative, decreasing and repeat when exhausted") {
  TransitionState ts;
  for (std::size_t k = 0; k + 1 < ts.jerk_seq.size(); ++k) {
    CHECK(ts.jerk_seq[k] < 0.0);
    CHECK(ts.jerk_seq[k + 1] <= ts.jerk_seq[k]);
  }
  CHECK(ts.jerk(0) == -1.0);
  CHECK(ts.jerk(9) == -10.0);
  CHECK(ts.jerk(50) == -10.0);
  ts.active = true;
  double prev = transition_bound(ts, 0.0, 0.1);
  for (int i = 0; i < 30; ++i) {
    const double b = transition_bound(ts, 0.0, 0.1);
    REQUIRE(b < prev);
    prev = b;
  }
}

TEST_CASE("entity at the current limit is a fixed point") {
  ConsensusState st(-6.0);
  const auto r = safe_consensus(st, step_at(1.0, -6.0), {}, always_safe);
  CHECK(st.a_min_forced == -6.0);
  CHECK_FALSE(st.a_cand.has_value());
  CHECK(r.a_trans_bound == kInf);
  CHECK(r.outbox.broadcast == LabelledLimit{-6.0, 1.0});
}

TEST_CASE("stronger limit becomes a candidate until all followers confirm") {
  ConsensusState st(-6.0);
  ConsensusStepInput in = step_at(1.0, -7.0);
  in.followers = {2, 3};
  auto r = safe_consensus(st, in, {}, always_safe);
  REQUIRE(st.a_cand.has_value());
  CHECK(*st.a_cand == -7.0);
  CHECK(st.a_min_forced == -6.0);
  CHECK(r.outbox.broadcast.a == -7.0);

  // only one confirmation
  ConsensusInbox inbox;
  inbox.confirmations[2] = {-7.0, 1.0};
  in.t = 1.1;
  safe_consensus(st, in, inbox, always_safe);
  CHECK(st.a_min_forced == -6.0);

  inbox.confirmations[3] = {-7.0, 1.1};
  in.t = 1.2;
  r = safe_consensus(st, in, inbox, always_safe);
  CHECK(st.a_min_forced == -7.0);
  CHECK_FALSE(st.a_cand.has_value());
  CHECK(st.t_accept == 1.2);
  CHECK(r.outbox.broadcast.a == -7.0);
  CHECK(st.stats.candidate_above_forced == 0);
  CHECK(st.stats.forced_weakened == 0);
  CHECK(st.stats.candidate_dropped_early == 0);
}

TEST_CASE("adoption takes the weakest confirmed value") {
  ConsensusState st(-6.0);
  ConsensusStepInput in = step_at(1.0, -6.5);
  in.followers = {2, 3};
  safe_consensus(st, in, {}, always_safe);
  in.t = 1.1;
  in.a_min_new = -7.0;
  safe_consensus(st, in, {}, always_safe);
  ConsensusInbox inbox;
  inbox.confirmations[2] = {-6.5, 1.0};
  inbox.confirmations[3] = {-7.0, 1.1};
  in.t = 1.2;
  safe_consensus(st, in, inbox, always_safe);
  CHECK(st.a_min_forced == -6.5);
  REQUIRE(st.a_cand.has_value());
  CHECK(*st.a_cand == -7.0);
}

TEST_CASE("confirmations older than the acceptance time are ignored") {
  ConsensusState st(-6.0);
  st.t_accept = 5.0;
  ConsensusStepInput in = step_at(5.0, -7.0);
  in.followers = {2};
  ConsensusInbox inbox;
  inbox.confirmations[2] = {-7.0, 4.9};
  safe_consensus(st, in, inbox, always_safe);
  CHECK(st.a_min_forced == -6.0);
}

TEST_CASE("without followers a stronger limit is adopted at once") {
  ConsensusState st(-6.0);
  safe_consensus(st, step_at(1.0, -7.0), {}, always_safe);
  CHECK(st.a_min_forced == -7.0);
  CHECK_FALSE(st.a_cand.has_value());
}

TEST_CASE("weaker limit needs verification, else the transition starts") {
  ConsensusState st(-7.0);
  ConsensusStepInput in = step_at(0.9, -7.0);
  in.last_applied_a = 0.4;
  safe_consensus(st, in, {}, always_safe);
  in.t = 1.0;
  in.a_min_new = -5.0;
  auto r = safe_consensus(st, in, {}, never_safe);
  CHECK(st.a_min_forced == -7.0);
  CHECK(r.a_trans_bound == doctest::Approx(0.4 - 0.1));
  in.t = 1.1;
  r = safe_consensus(st, in, {}, never_safe);
  CHECK(r.a_trans_bound == doctest::Approx(0.4 - 0.1 - 0.2));
  in.t = 1.2;
  r = safe_consensus(st, in, {}, always_safe);
  CHECK(st.a_min_forced == -5.0);
  CHECK(r.a_trans_bound == kInf);
}

TEST_CASE("weaker limit verification uses stored leader limits") {
  ConsensusState st(-7.0);
  st.add_leader(9);
  st.leader_limits[9] = {-8.0, 0.5};
  ConsensusStepInput in = step_at(1.0, -5.0);
  in.preceding = {9, 4};
  std::vector<LimitAssumption> seen;
  safe_consensus(st, in, {}, [&](double a, const std::vector<LimitAssumption>& y) {
    CHECK(a == -5.0);
    seen = y;
    return true;
  });
  REQUIRE(seen.size() == 2);
  CHECK(seen[0].id == 9);
  CHECK(seen[0].a_min == -8.0);
  CHECK(seen[1].id == 4);
  CHECK_FALSE(seen[1].a_min.has_value());
}

TEST_CASE("leader limits: stronger ones verified, weaker ones stored, all confirmed") {
  ConsensusState st(-6.0);
  st.add_leader(1);
  CHECK(st.leader_limits[1].a == -12.0);
  ConsensusStepInput in = step_at(1.0, -6.0);
  in.leaders = {1};
  ConsensusInbox inbox;
  inbox.leader_limits[1] = {-5.0, 0.9};
  auto r = safe_consensus(st, in, inbox, always_safe);
  CHECK(st.leader_limits[1] == LabelledLimit{-5.0, 0.9});
  REQUIRE(r.outbox.confirmations.size() == 1);
  CHECK(r.outbox.confirmations[0].second == LabelledLimit{-5.0, 0.9});

  // stronger, verification fails: keep the old value and start the transition
  inbox.leader_limits[1] = {-7.0, 1.0};
  in.t = 1.1;
  r = safe_consensus(st, in, inbox, [](double, const std::vector<LimitAssumption>& y) {
    return y.empty() || y[0].a_min != -7.0;
  });
  CHECK(st.leader_limits[1] == LabelledLimit{-5.0, 0.9});
  CHECK(r.a_trans_bound < kInf);
  CHECK(r.outbox.confirmations[0].second.label == 0.9);

  in.t = 1.2;
  r = safe_consensus(st, in, inbox, always_safe);
  CHECK(st.leader_limits[1] == LabelledLimit{-7.0, 1.0});
  CHECK(r.a_trans_bound == kInf);
}

TEST_CASE("candidate increase discards earlier confirmations") {
  ConsensusState st(-6.0);
  ConsensusStepInput in = step_at(1.0, -8.0);
  in.followers = {2};
  safe_consensus(st, in, {}, always_safe);
  CHECK(st.t_accept == 0.0);
  in.t = 1.5;
  in.a_min_new = -7.0;
  safe_consensus(st, in, {}, always_safe);
  CHECK(st.t_accept == 1.5);
}

TEST_CASE("reference entity fixed point and convergence to the weakest member") {
  ReferenceEntity same(-6.0);
  for (int i = 0; i < 5; ++i) CHECK(reference_entity_step(same, {{0, -6.0}}) == -6.0);

  // chain of five, each hears only its neighbours
  const std::vector<double> own{-5.0, -6.0, -10.0, -5.5, -9.0};
  std::vector<ReferenceEntity> e;
  for (double a : own) e.emplace_back(a);
  auto run_rounds = [&](int rounds) {
    std::vector<double> out(e.size());
    for (int r = 0; r < rounds; ++r) {
      std::vector<ConsensusSync> msg;
      for (const auto& x : e) msg.push_back(*x.outgoing());
      for (std::size_t i = 0; i < e.size(); ++i) {
        std::vector<ConsensusSync> peers;
        if (i > 0) peers.push_back(msg[i - 1]);
        if (i + 1 < e.size()) peers.push_back(msg[i + 1]);
        out[i] = reference_entity_step(e[i], peers);
      }
    }
    return out;
  };
  for (double x : run_rounds(40)) CHECK(std::abs(x - -5.0) < 0.01);
  for (const auto& x : e) CHECK(x.converged());

  // first member leaves, everyone restarts
  e.erase(e.begin());
  for (auto& x : e) x.reset();
  for (double x : run_rounds(40)) CHECK(std::abs(x - -5.5) < 0.01);
}

TEST_CASE("older epochs are ignored") {
  ReferenceEntity e(-8.0);
  e.reset();
  e.receive({0, -2.0});
  CHECK(e.estimate() == -8.0);
  e.receive({3, -7.0});
  CHECK(e.epoch() == 3);
  CHECK(e.estimate() == -7.0);
}
