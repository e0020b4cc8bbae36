#include "platoon/network.hpp"

#include <algorithm>
#include <stdexcept>

namespace platoon {

namespace {

template <class... F>
struct overloaded : F... {
  using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;

}  // namespace

const char* payload_kind(const Payload& p) {
  return std::visit(overloaded{[](const ProtocolBeacon&) { return "beacon"; },
                               [](const FollowRequest&) { return "follow_request"; },
                               [](const FollowConfirm&) { return "follow_confirm"; },
                               [](const ParamsBroadcast&) { return "params"; },
                               [](const BrakingLimit&) { return "braking_limit"; },
                               [](const Confirmation&) { return "confirmation"; },
                               [](const CollisionAlert&) { return "collision_alert"; },
                               [](const AlertWithdraw&) { return "alert_withdraw"; },
                               [](const ConsensusSync&) { return "consensus_sync"; }},
                    p);
}

int payload_lane(const Payload& p) {
  if (std::holds_alternative<AlertWithdraw>(p)) return static_cast<int>(Payload(CollisionAlert{}).index());
  return static_cast<int>(p.index());
}

void validate(const ChannelConfig& cfg) {
  if (!(cfg.drop_prob >= 0.0 && cfg.drop_prob <= 1.0)) throw std::invalid_argument("drop_prob must be in [0, 1]");
  if (!(cfg.duplicate_prob >= 0.0 && cfg.duplicate_prob <= 1.0))
    throw std::invalid_argument("duplicate_prob must be in [0, 1]");
  if (cfg.delay_min < 0 || cfg.delay_max < cfg.delay_min) throw std::invalid_argument("delay range invalid");
}

Channel::Channel(ChannelConfig cfg, bool record_trace) : cfg_(cfg), rng_(cfg.seed), record_(record_trace) {
  validate(cfg_);
}

std::vector<Envelope> Channel::step(std::vector<Envelope> new_sends, long now_step) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> delay(cfg_.delay_min, cfg_.delay_max);
  auto enqueue = [&](const Envelope& e) {
    const long due = now_step + delay(rng_);
    std::size_t idx = trace_.size();
    if (record_) trace_.push_back({e.sender, e.receiver, payload_kind(e.payload), e.send_step, due});
    pending_.push_back({due, seq_++, e, idx});
  };
  for (const Envelope& e : new_sends) {
    // fixed draw count per envelope keeps schedules comparable across configs
    const double drop = u(rng_);
    const double dup = u(rng_);
    if (drop < cfg_.drop_prob) {
      if (record_) trace_.push_back({e.sender, e.receiver, payload_kind(e.payload), e.send_step, std::nullopt});
      continue;
    }
    enqueue(e);
    if (dup < cfg_.duplicate_prob) enqueue(e);
  }

  std::vector<Pending> due;
  std::vector<Pending> keep;
  for (auto& p : pending_) (p.due <= now_step ? due : keep).push_back(std::move(p));
  pending_ = std::move(keep);
  std::sort(due.begin(), due.end(),
            [](const Pending& a, const Pending& b) { return a.due != b.due ? a.due < b.due : a.seq < b.seq; });
  std::vector<Envelope> out;
  out.reserve(due.size());
  for (auto& p : due) out.push_back(std::move(p.env));
  return out;
}

std::vector<Envelope> channel_step(Channel& ch, std::vector<Envelope> new_sends, long now_step) {
  return ch.step(std::move(new_sends), now_step);
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace) {
  os << "sender,receiver,kind,send_step,deliver_step\n";
  for (const auto& r : trace) {
    os << r.sender << ',' << r.receiver << ',' << r.kind << ',' << r.send_step << ',';
    if (r.deliver_step) os << *r.deliver_step;
    else os << "DROPPED";
    os << '\n';
  }
}

void Mailbox::ingest(const Envelope& e) {
  const auto key = std::make_pair(e.sender, payload_lane(e.payload));
  const auto it = latest_.find(key);
  if (it == latest_.end()) latest_.emplace(key, e);
  else if (e.send_time > it->second.send_time) it->second = e;
}

void Mailbox::ingest(const std::vector<Envelope>& es) {
  for (const auto& e : es) ingest(e);
}

void Mailbox::forget(VehicleId sender) {
  for (auto it = latest_.begin(); it != latest_.end();) {
    if (it->first.first == sender) it = latest_.erase(it);
    else ++it;
  }
}

const Envelope* Mailbox::latest(VehicleId sender, int lane) const {
  const auto it = latest_.find({sender, lane});
  return it == latest_.end() ? nullptr : &it->second;
}

Mailbox mailbox_ingest(Mailbox mb, const std::vector<Envelope>& delivered) {
  mb.ingest(delivered);
  return mb;
}

double collision_pos(const Mailbox& mb, VehicleId j) {
  const auto* alert = mb.get<CollisionAlert>(j);
  return alert != nullptr ? alert->s_coll : kInf;
}

std::vector<Envelope> coupling_step(VehicleId self, std::optional<VehicleId> direct_pred,
                                    std::optional<VehicleId> direct_succ, const Mailbox& mb, CouplingState& cs,
                                    double t, long step) {
  std::vector<Envelope> out;
  auto send = [&](VehicleId to, Payload p) { out.push_back({self, to, t, step, std::move(p)}); };
  auto fresh = [&](VehicleId from, const Payload& kind) -> const Envelope* {
    const int lane = payload_lane(kind);
    const Envelope* e = mb.latest(from, lane);
    if (e == nullptr) return nullptr;
    auto [it, inserted] = cs.processed.try_emplace({from, lane}, e->send_time);
    if (!inserted) {
      if (e->send_time <= it->second) return nullptr;
      it->second = e->send_time;
    }
    return e;
  };

  // the receiver is filled in by the caller for broadcasts
  send(-1, ProtocolBeacon{});

  if (direct_pred) {
    const VehicleId j = *direct_pred;
    if (fresh(j, FollowConfirm{}) != nullptr && cs.leaders.count(j) == 0) {
      const Envelope* c = mb.latest(j, payload_lane(FollowConfirm{}));
      if (c->receiver == self) cs.leaders.insert(j);
    }
    if (cs.leaders.count(j) == 0 && mb.latest(j, payload_lane(ProtocolBeacon{})) != nullptr) send(j, FollowRequest{});
  }
  if (direct_succ) {
    const VehicleId f = *direct_succ;
    const Envelope* r = fresh(f, FollowRequest{});
    if (r != nullptr && r->receiver == self) {
      cs.followers.insert(f);
      send(f, FollowConfirm{});
    }
  }
  return out;
}

}  // namespace platoon
