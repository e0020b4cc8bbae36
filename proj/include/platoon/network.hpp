#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <variant>
#include <vector>

#include "platoon/consensus.hpp"
#include "platoon/types.hpp"

namespace platoon {

struct ProtocolBeacon {};
struct FollowRequest {};
struct FollowConfirm {};
struct ParamsBroadcast {
  VehicleParams params;
};
struct BrakingLimit {
  double a;
  double label;
};
struct Confirmation {
  double a;
  double label;
};
struct CollisionAlert {
  double s_coll;  // predicted rear position of the sender
};
struct AlertWithdraw {};

using Payload = std::variant<ProtocolBeacon, FollowRequest, FollowConfirm, ParamsBroadcast, BrakingLimit,
                             Confirmation, CollisionAlert, AlertWithdraw, ConsensusSync>;

const char* payload_kind(const Payload& p);

/// Freshness lane: alerts and their withdrawals share one.
int payload_lane(const Payload& p);

struct Envelope {
  VehicleId sender{-1};
  VehicleId receiver{-1};
  double send_time{0.0};
  long send_step{0};
  Payload payload;
};

struct ChannelConfig {
  double drop_prob{0.0};
  int delay_min{0};  // [steps]
  int delay_max{0};
  double duplicate_prob{0.0};
  std::uint64_t seed{1};
};

void validate(const ChannelConfig& cfg);

struct TraceRecord {
  VehicleId sender;
  VehicleId receiver;
  const char* kind;
  long send_step;
  std::optional<long> deliver_step;  // empty when dropped
};

/// In-flight envelopes with seeded loss, delay and duplication.
class Channel {
 public:
  explicit Channel(ChannelConfig cfg = {}, bool record_trace = false);

  /// Accepts this step's sends and returns everything due by `now_step`,
  /// in order of due step, then submission.
  std::vector<Envelope> step(std::vector<Envelope> new_sends, long now_step);

  std::size_t in_flight() const { return pending_.size(); }
  const std::vector<TraceRecord>& trace() const { return trace_; }
  const ChannelConfig& config() const { return cfg_; }

 private:
  struct Pending {
    long due;
    std::uint64_t seq;
    Envelope env;
    std::size_t trace_index;
  };

  ChannelConfig cfg_;
  Rng rng_;
  bool record_;
  std::uint64_t seq_{0};
  std::vector<Pending> pending_;
  std::vector<TraceRecord> trace_;
};

std::vector<Envelope> channel_step(Channel& ch, std::vector<Envelope> new_sends, long now_step);

void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace);

/// Newest envelope per (sender, lane), cached across steps.
class Mailbox {
 public:
  void ingest(const Envelope& e);
  void ingest(const std::vector<Envelope>& es);
  void forget(VehicleId sender);

  const Envelope* latest(VehicleId sender, int lane) const;

  template <class T>
  const T* get(VehicleId sender) const {
    const Envelope* e = latest(sender, payload_lane(Payload{T{}}));
    return e != nullptr ? std::get_if<T>(&e->payload) : nullptr;
  }

  const std::map<std::pair<VehicleId, int>, Envelope>& entries() const { return latest_; }

 private:
  std::map<std::pair<VehicleId, int>, Envelope> latest_;
};

Mailbox mailbox_ingest(Mailbox mb, const std::vector<Envelope>& delivered);

/// Alerted collision position of `j`, or +inf if none or withdrawn.
double collision_pos(const Mailbox& mb, VehicleId j);

struct CouplingState {
  std::set<VehicleId> leaders;    // L
  std::set<VehicleId> followers;  // F
  std::map<std::pair<VehicleId, int>, double> processed;  // newest handled send time per (sender, lane)
};

/// Beacon every step; request coupling from the direct predecessor once its beacon
/// is seen; confirm requests from the direct successor. Returns the sends.
std::vector<Envelope> coupling_step(VehicleId self, std::optional<VehicleId> direct_pred,
                                    std::optional<VehicleId> direct_succ, const Mailbox& mb, CouplingState& cs,
                                    double t, long step);

}  // namespace platoon
