#include "fleetsim/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace fleetsim {

RadioProfile RadioProfile::band_915mhz() { return {"915MHz", 40.0, 2.7, 1.0, 95.0, 4e6, 0.01}; }

RadioProfile RadioProfile::band_5ghz() { return {"5GHz", 46.0, 2.2, 3.0, 92.0, 50e6, 0.005}; }

namespace {

double profile_loss(const RadioProfile& p, double d, double walls) {
  return p.ref_loss_at_1m + 10.0 * p.path_loss_exponent * std::log10(std::max(d, 1.0)) +
         p.per_wall_loss_multiplier * walls;
}

}  // namespace

const RadioProfile& link_profile(const WorldModel& world, const RadioNode& a, const RadioNode& b) {
  const double d = distance(a.position, b.position);
  const double walls = world.walls_between(a.position, b.position);
  // Ties go to the lower node id so the choice is symmetric.
  const RadioNode& lo = a.id <= b.id ? a : b;
  const RadioNode& hi = a.id <= b.id ? b : a;
  return profile_loss(hi.profile, d, walls) > profile_loss(lo.profile, d, walls) ? hi.profile : lo.profile;
}

double link_loss(const WorldModel& world, const RadioNode& a, const RadioNode& b) {
  if (a.position == b.position) return std::max(a.profile.ref_loss_at_1m, b.profile.ref_loss_at_1m);
  const double d = distance(a.position, b.position);
  const double walls = world.walls_between(a.position, b.position);
  return std::max(profile_loss(a.profile, d, walls), profile_loss(b.profile, d, walls));
}

std::string_view to_string(MessageClass c) {
  switch (c) {
    case MessageClass::control: return "control";
    case MessageClass::stream: return "stream";
    case MessageClass::bulk: return "bulk";
  }
  return "control";
}

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::active: return "active";
    case SessionState::stalled: return "stalled";
    case SessionState::complete: return "complete";
    case SessionState::aborted: return "aborted";
  }
  return "active";
}

std::vector<Link> compute_links(const WorldModel& world, std::span<const RadioNode> nodes,
                                const std::vector<std::pair<NodeId, NodeId>>& forced_down) {
  std::vector<Link> links;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      Link l;
      l.a = nodes[i].id;
      l.b = nodes[j].id;
      const auto& prof = nodes[i].position == nodes[j].position ? nodes[i].profile
                                                                : link_profile(world, nodes[i], nodes[j]);
      l.loss = link_loss(world, nodes[i], nodes[j]);
      l.forced_down = std::find(forced_down.begin(), forced_down.end(), std::pair{l.a, l.b}) != forced_down.end();
      l.up = !l.forced_down && l.loss <= prof.link_budget;
      l.effective_capacity = l.up ? prof.capacity : 0.0;
      l.base_latency = prof.base_latency;
      links.push_back(l);
    }
  }
  return links;
}

const Route& RoutingTable::get(NodeId from, NodeId to) const {
  return routes_.at(static_cast<std::size_t>(from) * n_ + static_cast<std::size_t>(to));
}

std::optional<NodeId> RoutingTable::next_hop(NodeId from, NodeId to) const {
  const Route& r = get(from, to);
  if (!r.reachable || r.path.size() < 2) return std::nullopt;
  return r.path[1];
}

RoutingTable compute_routes(std::span<const RadioNode> nodes, std::span<const Link> links) {
  RoutingTable t;
  const std::size_t n = nodes.size();
  t.n_ = n;
  t.routes_.assign(n * n, Route{});

  // Adjacency with losses; links are stored with a < b.
  std::vector<std::vector<std::pair<NodeId, double>>> adj(n);
  for (const auto& l : links) {
    if (!l.up) continue;
    adj[static_cast<std::size_t>(l.a)].push_back({l.b, l.loss});
    adj[static_cast<std::size_t>(l.b)].push_back({l.a, l.loss});
  }
  auto better = [](const Route& cand, const Route& cur) {
    if (!cur.reachable) return true;
    if (cand.hops != cur.hops) return cand.hops < cur.hops;
    if (cand.loss != cur.loss) return cand.loss < cur.loss;
    return cand.path < cur.path;
  };

  for (std::size_t s = 0; s < n; ++s) {
    std::vector<Route> best(n);
    best[s] = {true, {static_cast<NodeId>(s)}, 0, 0.0};
    // Bellman-Ford rounds: the lexicographic metric is small enough to relax
    // exhaustively and stays deterministic.
    for (std::size_t round = 0; round + 1 < n; ++round) {
      bool changed = false;
      for (std::size_t u = 0; u < n; ++u) {
        if (!best[u].reachable) continue;
        for (const auto& [v, loss] : adj[u]) {
          const auto vi = static_cast<std::size_t>(v);
          if (std::find(best[u].path.begin(), best[u].path.end(), v) != best[u].path.end()) continue;
          Route cand{true, best[u].path, best[u].hops + 1, best[u].loss + loss};
          cand.path.push_back(v);
          if (better(cand, best[vi])) {
            best[vi] = std::move(cand);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    for (std::size_t d = 0; d < n; ++d) t.routes_[s * n + d] = best[d];
  }
  return t;
}

RoutingTable route(std::span<const RadioNode> nodes, const WorldModel& world) {
  if (nodes.empty()) throw std::invalid_argument("route needs at least one node");
  const auto links = compute_links(world, nodes);
  return compute_routes(nodes, links);
}

// ---------------------------------------------------------------------------

Network::Network(const WorldModel& world, std::vector<RadioNode> nodes) : world_(world), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw std::invalid_argument("network needs at least one node");
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id != static_cast<NodeId>(i)) throw std::invalid_argument("radio node ids must be 0..n-1 in order");
  refresh_links(nullptr);
}

void Network::set_position(NodeId id, Vec2 p) { nodes_.at(static_cast<std::size_t>(id)).position = p; }

void Network::force_link_down(NodeId a, NodeId b, bool down) {
  const std::pair key{std::min(a, b), std::max(a, b)};
  auto it = std::find(forced_.begin(), forced_.end(), key);
  if (down && it == forced_.end()) forced_.push_back(key);
  if (!down && it != forced_.end()) forced_.erase(it);
  refresh_links(&pending_changes_);
}

const Link* Network::link(NodeId a, NodeId b) const {
  const NodeId lo = std::min(a, b), hi = std::max(a, b);
  for (const auto& l : links_)
    if (l.a == lo && l.b == hi) return &l;
  return nullptr;
}

void Network::refresh_links(std::vector<LinkChange>* changes) {
  auto fresh = compute_links(world_, nodes_, forced_);
  if (changes) {
    for (const auto& l : fresh) {
      const Link* old = link(l.a, l.b);
      if (!old || old->up != l.up) changes->push_back({l.a, l.b, l.up, l.loss});
    }
  }
  links_ = std::move(fresh);
  routes_ = compute_routes(nodes_, links_);
}

SendStatus Network::send(Message m) {
  if (m.source < 0 || m.destination < 0 || static_cast<std::size_t>(m.source) >= nodes_.size() ||
      static_cast<std::size_t>(m.destination) >= nodes_.size())
    throw std::invalid_argument("message addresses an unknown node");
  if (m.cls == MessageClass::control && m.payload_size > kMaxControlBytes)
    throw std::invalid_argument("control messages are limited to 256 bytes");
  if (m.source != m.destination && !any_route(m.source, m.destination)) return SendStatus::rejected_unreachable;

  m.enqueue_time = now_;
  m.id = next_id_++;
  if (m.cls == MessageClass::stream) {
    // Frame dropping: an unsent older frame of the same flow is superseded.
    frames_dropped_ += std::erase_if(inflight_, [&](const InFlight& f) {
      return f.msg.cls == MessageClass::stream && f.msg.flow == m.flow && f.hops == 0 &&
             f.remaining_bits == static_cast<double>(f.msg.payload_size) * 8.0;
    });
  }
  InFlight f{m, m.source, now_, static_cast<double>(m.payload_size) * 8.0};
  if (m.source == m.destination) f.arrived = true;
  inflight_.push_back(std::move(f));
  return SendStatus::accepted;
}

int Network::start_map_transfer(NodeId from, NodeId to, std::vector<std::uint8_t> snapshot, std::size_t chunk_size) {
  if (chunk_size == 0) throw std::invalid_argument("chunk size must be positive");
  TransferSession s;
  s.id = static_cast<int>(sessions_.size());
  s.from = from;
  s.to = to;
  s.chunk_size = chunk_size;
  s.chunks_total = std::max<std::size_t>(1, (snapshot.size() + chunk_size - 1) / chunk_size);
  s.started_at = now_;
  s.state = any_route(from, to) ? SessionState::active : SessionState::stalled;
  const std::size_t total_bytes = snapshot.size();
  s.snapshot = std::make_shared<const std::vector<std::uint8_t>>(std::move(snapshot));
  sessions_.push_back(s);

  for (std::size_t c = 0; c < s.chunks_total; ++c) {
    Message m;
    m.cls = MessageClass::bulk;
    m.source = from;
    m.destination = to;
    m.session = s.id;
    m.chunk = c;
    m.payload_size = std::min(chunk_size, total_bytes - c * chunk_size);
    m.enqueue_time = now_;
    m.id = next_id_++;
    inflight_.push_back({m, from, now_, static_cast<double>(m.payload_size) * 8.0});
  }
  return s.id;
}

void Network::abort_transfer(int session_id) {
  auto& s = sessions_.at(static_cast<std::size_t>(session_id));
  if (s.state == SessionState::complete) return;
  s.state = SessionState::aborted;
  std::erase_if(inflight_, [&](const InFlight& f) { return f.msg.session == session_id; });
}

NetworkStepReport Network::step(double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("network step needs dt > 0");
  NetworkStepReport report;
  const double t0 = now_;
  const double t1 = static_cast<double>(steps_ + 1) * dt;
  report.time_begin = t0;
  report.time_end = t1;
  report.stream_frames_dropped = std::exchange(frames_dropped_, 0);

  report.link_changes = std::exchange(pending_changes_, {});
  refresh_links(&report.link_changes);

  for (auto& s : sessions_) {
    if (s.state == SessionState::active && !any_route(s.from, s.to)) s.state = SessionState::stalled;
    else if (s.state == SessionState::stalled && any_route(s.from, s.to)) s.state = SessionState::active;
  }

  // Per directed link: time the channel is busy until, and bits used.
  const std::size_t n = nodes_.size();
  std::vector<double> clock(n * n, t0);
  std::vector<double> used(n * n, 0.0);

  std::vector<std::size_t> order(inflight_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ma = inflight_[a].msg;
    const auto& mb = inflight_[b].msg;
    if (ma.cls != mb.cls) return ma.cls < mb.cls;
    return ma.id < mb.id;
  });

  for (auto cls : {MessageClass::control, MessageClass::stream, MessageClass::bulk}) {
    bool progress = true;
    while (progress) {
      progress = false;
      for (const std::size_t idx : order) {
        InFlight& f = inflight_[idx];
        if (f.msg.cls != cls || f.arrived) continue;
        const auto hop = routes_.next_hop(f.at, f.msg.destination);
        if (!hop) continue;
        const Link* l = link(f.at, *hop);
        const double cap = l->effective_capacity;
        if (cap <= 0.0) continue;
        const std::size_t key = static_cast<std::size_t>(f.at) * n + static_cast<std::size_t>(*hop);
        const double start = std::max(clock[key], f.ready_time);
        if (start >= t1) continue;
        const double budget = std::min((t1 - start) * cap, cap * dt - used[key]);
        if (budget <= 0.0) continue;
        const double sent = std::min(f.remaining_bits, budget);
        clock[key] = start + sent / cap;
        used[key] += sent;
        f.remaining_bits -= sent;
        progress = true;
        if (f.remaining_bits <= 0.0) {
          f.at = *hop;
          f.ready_time = clock[key] + l->base_latency;
          ++f.hops;
          f.remaining_bits = static_cast<double>(f.msg.payload_size) * 8.0;
          if (f.at == f.msg.destination) f.arrived = true;
        }
      }
    }
  }

  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b)
      if (used[a * n + b] > 0.0) {
        const Link* l = link(static_cast<NodeId>(a), static_cast<NodeId>(b));
        report.usage.push_back(
            {static_cast<NodeId>(a), static_cast<NodeId>(b), used[a * n + b], l->effective_capacity * dt});
      }

  // Deliveries whose arrival falls inside this window, in arrival order.
  std::vector<std::size_t> done;
  for (const std::size_t idx : order)
    if (inflight_[idx].arrived && inflight_[idx].ready_time <= t1) done.push_back(idx);
  std::stable_sort(done.begin(), done.end(), [&](std::size_t a, std::size_t b) {
    return inflight_[a].ready_time != inflight_[b].ready_time ? inflight_[a].ready_time < inflight_[b].ready_time
                                                              : inflight_[a].msg.id < inflight_[b].msg.id;
  });
  for (const std::size_t idx : done) {
    const InFlight& f = inflight_[idx];
    report.delivered.push_back({f.msg, f.ready_time, f.hops});
    if (f.msg.session >= 0) {
      auto& s = sessions_[static_cast<std::size_t>(f.msg.session)];
      if (s.state == SessionState::aborted) continue;
      ++s.chunks_acked;
      if (report.sessions_progressed.empty() || report.sessions_progressed.back() != s.id)
        report.sessions_progressed.push_back(s.id);
      if (s.chunks_acked == s.chunks_total) {
        s.state = SessionState::complete;
        s.completed_at = f.ready_time;
        report.sessions_completed.push_back(s.id);
      }
    }
  }
  std::vector<bool> remove(inflight_.size(), false);
  for (const std::size_t idx : done) remove[idx] = true;
  std::vector<InFlight> keep;
  keep.reserve(inflight_.size() - done.size());
  for (std::size_t i = 0; i < inflight_.size(); ++i)
    if (!remove[i]) keep.push_back(std::move(inflight_[i]));
  inflight_ = std::move(keep);

  ++steps_;
  now_ = t1;
  return report;
}

}  // namespace fleetsim
