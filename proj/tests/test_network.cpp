#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "platoon/network.hpp"

using namespace platoon;

namespace {

Envelope env(VehicleId from, VehicleId to, long step, Payload p) {
  return {from, to, 0.1 * static_cast<double>(step), step, std::move(p)};
}

std::vector<Envelope> batch(long step, int n) {
  std::vector<Envelope> v;
  for (int i = 0; i < n; ++i) v.push_back(env(i, 100, step, BrakingLimit{-1.0 * i, 0.1 * step}));
  return v;
}

// Delivers broadcasts (receiver -1) to every other vehicle in `ids`.
std::vector<Envelope> address(const std::vector<Envelope>& sends, const std::vector<VehicleId>& ids) {
  std::vector<Envelope> out;
  for (const auto& e : sends) {
    if (e.receiver >= 0) {
      out.push_back(e);
      continue;
    }
    for (VehicleId r : ids)
      if (r != e.sender) {
        Envelope c = e;
        c.receiver = r;
        out.push_back(c);
      }
  }
  return out;
}

}  // namespace

TEST_CASE("perfect channel delivers everything in order the same step") {
  Channel ch;
  const auto out = channel_step(ch, batch(0, 5), 0);
  REQUIRE(out.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(out[i].sender == i);
  CHECK(ch.in_flight() == 0);
}

TEST_CASE("fully lossy channel delivers nothing") {
  ChannelConfig cfg;
  cfg.drop_prob = 1.0;
  Channel ch(cfg, true);
  for (long s = 0; s < 10; ++s) CHECK(channel_step(ch, batch(s, 3), s).empty());
  for (const auto& r : ch.trace()) CHECK_FALSE(r.deliver_step.has_value());
}

TEST_CASE("fixed delay delivers exactly that many steps later") {
  ChannelConfig cfg;
  cfg.delay_min = cfg.delay_max = 2;
  Channel ch(cfg);
  for (long s = 0; s < 6; ++s) {
    const auto out = channel_step(ch, batch(s, 2), s);
    if (s < 2) {
      CHECK(out.empty());
    } else {
      REQUIRE(out.size() == 2);
      for (const auto& e : out) CHECK(e.send_step == s - 2);
    }
  }
}

TEST_CASE("duplication and determinism under a seed") {
  ChannelConfig cfg;
  cfg.duplicate_prob = 1.0;
  Channel ch(cfg);
  CHECK(channel_step(ch, batch(0, 3), 0).size() == 6);

  ChannelConfig noisy{0.3, 0, 10, 0.2, 77};
  Channel a(noisy, true);
  Channel b(noisy, true);
  for (long s = 0; s < 50; ++s) {
    const auto x = channel_step(a, batch(s, 4), s);
    const auto y = channel_step(b, batch(s, 4), s);
    REQUIRE(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(x[i].send_step == y[i].send_step);
  }
  std::ostringstream sa, sb;
  write_trace_csv(sa, a.trace());
  write_trace_csv(sb, b.trace());
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("sender,receiver,kind,send_step,deliver_step\n", 0) == 0);
  CHECK(sa.str().find("DROPPED") != std::string::npos);
}

TEST_CASE("property: delivered envelopes are unmodified and respect the delay range") {
  ChannelConfig cfg{0.2, 1, 4, 0.3, 9};
  Channel ch(cfg);
  long delivered = 0;
  for (long s = 0; s < 200; ++s) {
    for (const auto& e : channel_step(ch, batch(s, 3), s)) {
      ++delivered;
      REQUIRE(s - e.send_step >= 1);
      REQUIRE(s - e.send_step <= 4);
      const auto* b = std::get_if<BrakingLimit>(&e.payload);
      REQUIRE(b != nullptr);
      REQUIRE(b->a == -1.0 * e.sender);
      REQUIRE(b->label == doctest::Approx(0.1 * e.send_step));
    }
  }
  CHECK(delivered > 400);
}

TEST_CASE("mailbox keeps the newest envelope per sender and lane") {
  Mailbox mb;
  mb.ingest(env(1, 0, 5, BrakingLimit{-6.0, 0.5}));
  REQUIRE(mb.get<BrakingLimit>(1) != nullptr);
  CHECK(mb.get<BrakingLimit>(1)->a == -6.0);
  mb.ingest(env(1, 0, 3, BrakingLimit{-9.0, 0.3}));
  CHECK(mb.get<BrakingLimit>(1)->a == -6.0);
  mb.ingest(env(1, 0, 5, BrakingLimit{-7.0, 0.5}));
  CHECK(mb.get<BrakingLimit>(1)->a == -6.0);
  mb.ingest(env(1, 0, 6, ProtocolBeacon{}));
  CHECK(mb.get<BrakingLimit>(1)->a == -6.0);
  CHECK(mb.get<ProtocolBeacon>(1) != nullptr);
  mb = mailbox_ingest(mb, {env(1, 0, 7, BrakingLimit{-5.0, 0.7})});
  CHECK(mb.get<BrakingLimit>(1)->a == -5.0);
  mb.forget(1);
  CHECK(mb.get<BrakingLimit>(1) == nullptr);
}

TEST_CASE("collision position follows alert and withdraw") {
  Mailbox mb;
  CHECK(collision_pos(mb, 3) == kInf);
  mb.ingest(env(3, 0, 10, CollisionAlert{500.0}));
  CHECK(collision_pos(mb, 3) == 500.0);
  mb.ingest(env(3, 0, 11, AlertWithdraw{}));
  CHECK(collision_pos(mb, 3) == kInf);
  // a late alert older than the withdrawal stays ignored
  mb.ingest(env(3, 0, 9, CollisionAlert{400.0}));
  CHECK(collision_pos(mb, 3) == kInf);
}

TEST_CASE("lost withdrawal keeps the alert") {
  ChannelConfig cfg;
  cfg.drop_prob = 1.0;
  Channel lossy(cfg);
  Mailbox mb;
  Channel perfect;
  mb.ingest(channel_step(perfect, {env(3, 0, 10, CollisionAlert{500.0})}, 10));
  mb.ingest(channel_step(lossy, {env(3, 0, 11, AlertWithdraw{})}, 11));
  CHECK(collision_pos(mb, 3) == 500.0);
}

TEST_CASE("two vehicles couple within three steps over a perfect channel") {
  // vehicle 1 ahead of vehicle 0
  Channel ch;
  Mailbox mb0, mb1;
  CouplingState c0, c1;
  int coupled_at = -1;
  for (long s = 0; s < 6 && coupled_at < 0; ++s) {
    std::vector<Envelope> sends;
    for (auto& e : coupling_step(0, VehicleId{1}, std::nullopt, mb0, c0, 0.1 * s, s)) sends.push_back(e);
    for (auto& e : coupling_step(1, std::nullopt, VehicleId{0}, mb1, c1, 0.1 * s, s)) sends.push_back(e);
    for (const auto& e : channel_step(ch, address(sends, {0, 1}), s)) (e.receiver == 0 ? mb0 : mb1).ingest(e);
    if (c0.leaders.count(1) && c1.followers.count(0)) coupled_at = static_cast<int>(s);
  }
  CHECK(coupled_at >= 0);
  CHECK(coupled_at <= 3);
}

TEST_CASE("no coupling over a dead channel or with non-adjacent vehicles") {
  ChannelConfig cfg;
  cfg.drop_prob = 1.0;
  Channel dead(cfg);
  Mailbox mb0, mb1;
  CouplingState c0, c1;
  for (long s = 0; s < 20; ++s) {
    std::vector<Envelope> sends;
    for (auto& e : coupling_step(0, VehicleId{1}, std::nullopt, mb0, c0, 0.1 * s, s)) sends.push_back(e);
    for (auto& e : coupling_step(1, std::nullopt, VehicleId{0}, mb1, c1, 0.1 * s, s)) sends.push_back(e);
    for (const auto& e : channel_step(dead, address(sends, {0, 1}), s)) (e.receiver == 0 ? mb0 : mb1).ingest(e);
  }
  CHECK(c0.leaders.empty());
  CHECK(c1.followers.empty());

  // beacon from vehicle 5 which is not the direct predecessor (that is 2)
  Mailbox mb;
  mb.ingest(env(5, -1, 0, ProtocolBeacon{}));
  CouplingState cs;
  const auto out = coupling_step(0, VehicleId{2}, std::nullopt, mb, cs, 0.1, 1);
  for (const auto& e : out) CHECK_FALSE(std::holds_alternative<FollowRequest>(e.payload));
}
