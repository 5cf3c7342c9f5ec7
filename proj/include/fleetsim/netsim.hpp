#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fleetsim/geometry.hpp"
#include "fleetsim/world.hpp"

namespace fleetsim {

using NodeId = int;

struct RadioProfile {
  std::string band_label;
  double ref_loss_at_1m = 40.0;         // dB
  double path_loss_exponent = 2.7;
  double per_wall_loss_multiplier = 1.0;
  double link_budget = 95.0;            // dB
  double capacity = 4e6;                // bits/s
  double base_latency = 0.01;           // s per hop

  /// Sub-GHz mesh radio: longer reach, better wall penetration, low rate.
  static RadioProfile band_915mhz();
  /// Wi-Fi class 5 GHz radio: poor wall penetration.
  static RadioProfile band_5ghz();
};

struct RadioNode {
  NodeId id = 0;
  std::string name;
  Vec2 position;
  RadioProfile profile;
};

/// Log-distance path loss plus per-wall attenuation. When the endpoint
/// profiles differ the one giving the larger loss is used.
double link_loss(const WorldModel& world, const RadioNode& a, const RadioNode& b);

/// The profile governing the a-b link (max-loss endpoint profile).
const RadioProfile& link_profile(const WorldModel& world, const RadioNode& a, const RadioNode& b);

struct Link {
  NodeId a = 0;  // a < b
  NodeId b = 0;
  double loss = 0.0;
  bool up = false;
  double effective_capacity = 0.0;  // bits/s, 0 when down
  double base_latency = 0.0;
  bool forced_down = false;
};

struct Route {
  bool reachable = false;
  std::vector<NodeId> path;  // source first
  int hops = 0;
  double loss = 0.0;
};

/// All-pairs routes over up links: fewest hops, then least total loss, then
/// the lexicographically smallest node-id path.
class RoutingTable {
 public:
  const Route& get(NodeId from, NodeId to) const;
  std::optional<NodeId> next_hop(NodeId from, NodeId to) const;
  std::size_t node_count() const { return n_; }

 private:
  friend RoutingTable compute_routes(std::span<const RadioNode>, std::span<const Link>);
  std::size_t n_ = 0;
  std::vector<Route> routes_;  // n * n, row = source
};

std::vector<Link> compute_links(const WorldModel& world, std::span<const RadioNode> nodes,
                                const std::vector<std::pair<NodeId, NodeId>>& forced_down = {});
RoutingTable compute_routes(std::span<const RadioNode> nodes, std::span<const Link> links);
RoutingTable route(std::span<const RadioNode> nodes, const WorldModel& world);

enum class MessageClass : std::uint8_t { control = 0, stream = 1, bulk = 2 };  // priority order
std::string_view to_string(MessageClass c);

inline constexpr std::size_t kMaxControlBytes = 256;

struct Message {
  MessageClass cls = MessageClass::control;
  std::size_t payload_size = 0;  // bytes
  NodeId source = 0;
  NodeId destination = 0;
  double enqueue_time = 0.0;
  std::string payload;           // opaque text body (control commands)
  std::uint64_t flow = 0;        // stream flow id; a newer frame replaces an unsent one
  int session = -1;              // transfer session for bulk chunks
  std::size_t chunk = 0;
  std::uint64_t id = 0;          // assigned by Network::send
};

struct Delivery {
  Message message;
  double arrival_time = 0.0;
  int hops = 0;
};

enum class SendStatus { accepted, rejected_unreachable };

enum class SessionState { active, stalled, complete, aborted };
std::string_view to_string(SessionState s);

struct TransferSession {
  int id = -1;
  NodeId from = 0;
  NodeId to = 0;
  std::shared_ptr<const std::vector<std::uint8_t>> snapshot;
  std::size_t chunk_size = 65536;
  std::size_t chunks_total = 0;
  std::size_t chunks_acked = 0;
  SessionState state = SessionState::active;
  double started_at = 0.0;
  double completed_at = -1.0;  // arrival time of the last chunk
};

struct LinkChange {
  NodeId a, b;
  bool up;
  double loss;
};

struct LinkUsage {
  NodeId from, to;
  double bits;
  double capacity_bits;  // capacity * dt for the step
};

struct NetworkStepReport {
  double time_begin = 0.0;
  double time_end = 0.0;
  std::vector<Delivery> delivered;
  std::vector<LinkChange> link_changes;
  std::vector<int> sessions_progressed;
  std::vector<int> sessions_completed;
  std::vector<LinkUsage> usage;
  std::size_t stream_frames_dropped = 0;
};

/// Deterministic discrete-time mesh network. All state advances in step().
class Network {
 public:
  Network(const WorldModel& world, std::vector<RadioNode> nodes);

  void set_position(NodeId id, Vec2 p);
  /// Scripted outage: the a-b link is held down until released.
  void force_link_down(NodeId a, NodeId b, bool down);

  SendStatus send(Message m);
  int start_map_transfer(NodeId from, NodeId to, std::vector<std::uint8_t> snapshot,
                         std::size_t chunk_size = 65536);
  void abort_transfer(int session_id);

  NetworkStepReport step(double dt);

  double now() const { return now_; }
  const std::vector<RadioNode>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const Link* link(NodeId a, NodeId b) const;
  const RoutingTable& routes() const { return routes_; }
  const TransferSession& session(int id) const { return sessions_.at(static_cast<std::size_t>(id)); }
  const std::vector<TransferSession>& sessions() const { return sessions_; }
  std::size_t queued_messages() const { return inflight_.size(); }

 private:
  struct InFlight {
    Message msg;
    NodeId at;
    double ready_time;
    double remaining_bits;  // on the current hop
    int hops = 0;
    bool arrived = false;   // reached destination, waiting for arrival time
  };

  void refresh_links(std::vector<LinkChange>* changes);
  bool any_route(NodeId from, NodeId to) const { return routes_.get(from, to).reachable; }

  const WorldModel& world_;
  std::vector<RadioNode> nodes_;
  std::vector<Link> links_;
  std::vector<std::pair<NodeId, NodeId>> forced_;
  RoutingTable routes_;
  std::vector<InFlight> inflight_;
  std::vector<TransferSession> sessions_;
  std::uint64_t next_id_ = 1;
  double now_ = 0.0;
  std::uint64_t steps_ = 0;
  std::size_t frames_dropped_ = 0;
  std::vector<LinkChange> pending_changes_;
};

}  // namespace fleetsim
