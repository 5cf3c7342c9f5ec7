#include <arpa/inet.h>
#include <netinet/in.h>
#include <openssl/evp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fleetsim/wire.hpp"

namespace fleetsim {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Map deltas

ojson MapDeltaTracker::next(const AnnotatedMap& map, const void* identity) {
  ojson d;
  const bool reset = identity != identity_ || map.origin_frame() != frame_ || map.size() < mirror_.size();
  if (reset) {
    identity_ = identity;
    frame_ = map.origin_frame();
    mirror_.clear();
    ++generation_;
  }
  const std::size_t old = mirror_.size();
  d["generation"] = generation_;
  d["reset"] = reset;
  d["origin_frame"] = frame_;
  d["voxel"] = map.voxel();
  d["point_count"] = map.size();
  ojson added = ojson::array();
  for (std::size_t i = old; i < map.size(); ++i) {
    const auto r = encode_record(map, i);
    mirror_.push_back(r);
    added.push_back({static_cast<double>(r.x), static_cast<double>(r.y), r.descriptor, r.level, r.distance_mm});
  }
  ojson changed = ojson::array();
  for (const auto& [idx, ann] : map.annotations()) {
    if (idx >= old) continue;
    const auto r = encode_record(map, idx);
    if (r == mirror_[idx]) continue;
    mirror_[idx] = r;
    changed.push_back({idx, r.descriptor, r.level, r.distance_mm});
  }
  d["added"] = std::move(added);
  d["changed"] = std::move(changed);
  return d;
}

void MapReplica::apply(const nlohmann::json& d) {
  const auto gen = d.at("generation").get<std::uint64_t>();
  if (d.at("reset").get<bool>() || gen != generation_) {
    records_.clear();
    generation_ = gen;
  }
  frame_ = d.at("origin_frame").get<std::string>();
  voxel_ = d.at("voxel").get<double>();
  for (const auto& a : d.at("added")) {
    MapRecord r;
    r.x = static_cast<float>(a.at(0).get<double>());
    r.y = static_cast<float>(a.at(1).get<double>());
    r.descriptor = a.at(2).get<std::uint8_t>();
    r.level = a.at(3).get<std::uint8_t>();
    r.distance_mm = a.at(4).get<std::uint16_t>();
    records_.push_back(r);
  }
  for (const auto& c : d.at("changed")) {
    auto& r = records_.at(c.at(0).get<std::size_t>());
    r.descriptor = c.at(1).get<std::uint8_t>();
    r.level = c.at(2).get<std::uint8_t>();
    r.distance_mm = c.at(3).get<std::uint16_t>();
  }
}

// ---------------------------------------------------------------------------
// Frames

ojson decimated_scan(const Scan& scan, std::size_t max_beams) {
  ojson s;
  const std::size_t n = scan.beams.size();
  const std::size_t stride = n <= max_beams ? 1 : (n + max_beams - 1) / max_beams;
  ojson ranges = ojson::array();
  for (std::size_t i = 0; i < n; i += stride)
    ranges.push_back(scan.beams[i].hit ? ojson(scan.beams[i].range) : ojson(nullptr));
  s["timestamp"] = scan.timestamp;
  s["angle_min"] = n ? scan.beams[0].angle : 0.0;
  s["angle_increment"] = scan.angular_increment() * static_cast<double>(stride);
  s["max_range"] = scan.max_range;
  s["ranges"] = std::move(ranges);
  return s;
}

namespace {

ojson pose_obj(const Transform2D& t) { return {{"x", t.x}, {"y", t.y}, {"theta", t.theta}}; }

}  // namespace

ojson snapshot_payload(const Simulation& sim) {
  ojson p;
  p["schema"] = kWireSchemaVersion;
  p["sim_time"] = sim.time();
  p["phase"] = to_string(sim.mission().phase);
  p["active_robot"] = sim.mission().active_robot;
  p["mission_failed"] = sim.mission().failed;

  ojson robots = ojson::array();
  for (const auto& r : sim.robots()) {
    ojson o;
    o["id"] = r->spec.id;
    o["pose"] = pose_obj(r->pose);
    o["estimate"] = pose_obj(r->estimated_pose);
    o["frame"] = r->estimate_frame;
    o["mode"] = to_string(r->mode);
    o["camera_pan"] = r->spec.camera ? ojson(r->camera_pan) : ojson(nullptr);
    o["velocity"] = {{"v", r->applied.v}, {"omega", r->applied.omega}};
    o["distance"] = r->distance_travelled;
    o["footprint_radius"] = r->spec.footprint_radius;
    o["scan"] = r->last_scan ? decimated_scan(*r->last_scan) : ojson(nullptr);
    o["intensity"] = r->last_reading ? ojson(r->last_reading->mean_gray) : ojson(nullptr);
    robots.push_back(std::move(o));
  }
  p["robots"] = std::move(robots);

  const auto& net = sim.network();
  const auto& nodes = net.nodes();
  ojson nodes_j = ojson::array();
  for (const auto& n : nodes)
    nodes_j.push_back({{"id", n.id}, {"name", n.name}, {"x", n.position.x}, {"y", n.position.y},
                       {"band", n.profile.band_label}});
  p["nodes"] = std::move(nodes_j);
  ojson links = ojson::array();
  for (const auto& l : net.links()) {
    const auto& a = nodes[static_cast<std::size_t>(l.a)];
    const auto& b = nodes[static_cast<std::size_t>(l.b)];
    links.push_back({{"a", a.name},
                     {"b", b.name},
                     {"loss", l.loss},
                     {"budget", link_profile(sim.world(), a, b).link_budget},
                     {"up", l.up},
                     {"forced_down", l.forced_down},
                     {"capacity", l.effective_capacity}});
  }
  p["links"] = std::move(links);
  ojson routes = ojson::array();
  for (const auto& n : nodes) {
    if (n.id == Simulation::kBaseNode) continue;
    const auto& r = net.routes().get(Simulation::kBaseNode, n.id);
    ojson path = ojson::array();
    for (const NodeId id : r.path) path.push_back(nodes[static_cast<std::size_t>(id)].name);
    routes.push_back({{"to", n.name}, {"reachable", r.reachable}, {"hops", r.hops}, {"path", std::move(path)}});
  }
  p["routes"] = std::move(routes);

  if (const auto id = sim.mission().transfer) {
    const auto& s = net.session(*id);
    p["transfer"] = {{"session", s.id},
                     {"from", sim.mission().transfer_from},
                     {"to", sim.mission().transfer_to},
                     {"state", to_string(s.state)},
                     {"chunks_acked", s.chunks_acked},
                     {"chunks_total", s.chunks_total},
                     {"bytes", s.snapshot ? s.snapshot->size() : 0}};
  } else {
    p["transfer"] = nullptr;
  }

  ojson det = ojson::array();
  const auto& all = sim.mission().detections;
  for (std::size_t i = all.size() > 10 ? all.size() - 10 : 0; i < all.size(); ++i)
    det.push_back({{"robot", all[i].robot_id},
                   {"sim_time", all[i].reading.timestamp},
                   {"mean_gray", all[i].reading.mean_gray},
                   {"annotated_point_count", all[i].annotated_point_count}});
  p["detections"] = std::move(det);
  return p;
}

ojson event_frame(const SimEvent& e) {
  return {{"type", "event"},
          {"payload",
           {{"kind", to_string(e.kind)}, {"sim_time", e.sim_time}, {"robot_id", e.robot_id}, {"detail", e.detail},
            {"data", e.data}}}};
}

ojson error_frame(const std::string& message) { return {{"type", "error"}, {"payload", {{"message", message}}}}; }

OperatorCommand parse_client_frame(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    throw std::invalid_argument("frame is not valid JSON");
  }
  return command_from_json(j);
}

// ---------------------------------------------------------------------------
// Websocket framing

std::string websocket_accept_key(const std::string& client_key) {
  const std::string src = client_key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(src.data(), src.size(), md, &len, EVP_sha1(), nullptr) != 1) throw std::runtime_error("sha1 failed");
  std::string out(4 * ((len + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), md, static_cast<int>(len));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string websocket_frame(std::string_view payload, std::uint8_t opcode, bool fin,
                            std::optional<std::uint32_t> mask) {
  std::string f;
  f += static_cast<char>((fin ? 0x80 : 0x00) | (opcode & 0x0f));
  const std::uint8_t mbit = mask ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    f += static_cast<char>(mbit | n);
  } else if (n <= 0xffff) {
    f += static_cast<char>(mbit | 126);
    f += static_cast<char>((n >> 8) & 0xff);
    f += static_cast<char>(n & 0xff);
  } else {
    f += static_cast<char>(mbit | 127);
    for (int i = 7; i >= 0; --i) f += static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xff);
  }
  if (!mask) return f.append(payload);
  const std::uint8_t key[4] = {static_cast<std::uint8_t>(*mask >> 24), static_cast<std::uint8_t>(*mask >> 16),
                               static_cast<std::uint8_t>(*mask >> 8), static_cast<std::uint8_t>(*mask)};
  f.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < n; ++i) f += static_cast<char>(payload[i] ^ key[i % 4]);
  return f;
}

void WsDecoder::feed(std::string_view bytes) { buf_.append(bytes); }

std::optional<WsMessage> WsDecoder::next() {
  constexpr std::uint64_t kMaxPayload = 1 << 20;
  while (!error_) {
    if (buf_.size() < 2) return std::nullopt;
    const auto b0 = static_cast<std::uint8_t>(buf_[0]);
    const auto b1 = static_cast<std::uint8_t>(buf_[1]);
    const bool fin = b0 & 0x80;
    const std::uint8_t opcode = b0 & 0x0f;
    const bool masked = b1 & 0x80;
    std::uint64_t len = b1 & 0x7f;
    std::size_t pos = 2;
    if (len == 126) {
      if (buf_.size() < 4) return std::nullopt;
      len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf_[2])) << 8) | static_cast<std::uint8_t>(buf_[3]);
      pos = 4;
    } else if (len == 127) {
      if (buf_.size() < 10) return std::nullopt;
      len = 0;
      for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<std::uint8_t>(buf_[2 + i]);
      pos = 10;
    }
    if (len > kMaxPayload || (opcode >= 8 && (len > 125 || !fin))) {
      error_ = true;
      return std::nullopt;
    }
    std::uint8_t key[4] = {0, 0, 0, 0};
    if (masked) {
      if (buf_.size() < pos + 4) return std::nullopt;
      for (int i = 0; i < 4; ++i) key[i] = static_cast<std::uint8_t>(buf_[pos + i]);
      pos += 4;
    }
    if (buf_.size() < pos + len) return std::nullopt;
    std::string payload = buf_.substr(pos, len);
    if (masked)
      for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ key[i % 4]);
    buf_.erase(0, pos + len);

    if (opcode >= 8) return WsMessage{opcode, std::move(payload)};
    if (opcode == 0) {
      if (partial_opcode_ == 0) {
        error_ = true;
        return std::nullopt;
      }
      partial_ += payload;
    } else {
      if (partial_opcode_ != 0) {
        error_ = true;
        return std::nullopt;
      }
      partial_opcode_ = opcode;
      partial_ = std::move(payload);
    }
    if (partial_.size() > kMaxPayload) {
      error_ = true;
      return std::nullopt;
    }
    if (fin) {
      WsMessage m{partial_opcode_, std::move(partial_)};
      partial_.clear();
      partial_opcode_ = 0;
      return m;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Server

namespace {

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

/// Reads the HTTP upgrade request; returns the Sec-WebSocket-Key or empty.
std::string read_handshake(int fd, std::string& leftover) {
  std::string req;
  char buf[2048];
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (req.find("\r\n\r\n") == std::string::npos) {
    if (req.size() > 16384 || std::chrono::steady_clock::now() > deadline) return {};
    pollfd p{fd, POLLIN, 0};
    if (::poll(&p, 1, 200) <= 0) continue;
    const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n <= 0) return {};
    req.append(buf, static_cast<std::size_t>(n));
  }
  const auto end = req.find("\r\n\r\n");
  leftover = req.substr(end + 4);
  req.resize(end);
  std::string key;
  bool upgrade = false;
  std::size_t pos = req.find("\r\n");
  while (pos != std::string::npos && pos < req.size()) {
    const auto next = req.find("\r\n", pos + 2);
    const auto line = req.substr(pos + 2, (next == std::string::npos ? req.size() : next) - pos - 2);
    const auto colon = line.find(':');
    if (colon != std::string::npos) {
      const auto name = lower(line.substr(0, colon));
      auto value = line.substr(colon + 1);
      value.erase(0, value.find_first_not_of(" \t"));
      value.erase(value.find_last_not_of(" \t") + 1);
      if (name == "sec-websocket-key") key = value;
      if (name == "upgrade" && lower(value) == "websocket") upgrade = true;
    }
    pos = next;
  }
  return upgrade ? key : std::string{};
}

}  // namespace

ConsoleGateway::ConsoleGateway(const std::string& host, std::uint16_t port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw std::invalid_argument("bind address must be an IPv4 address: " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

ConsoleGateway::~ConsoleGateway() { stop(); }

void ConsoleGateway::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::map<int, std::shared_ptr<Client>> all;
  {
    std::lock_guard lk(mu_);
    all = clients_;
  }
  for (auto& [id, c] : all) {
    c->open = false;
    ::shutdown(c->fd, SHUT_RDWR);
  }
  for (auto& [id, c] : all)
    if (c->reader.joinable()) c->reader.join();
  for (auto& [id, c] : all) ::close(c->fd);
  {
    std::lock_guard lk(mu_);
    clients_.clear();
  }
  ::close(listen_fd_);
}

void ConsoleGateway::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::string leftover;
    const auto key = read_handshake(fd, leftover);
    if (key.empty()) {
      send_all(fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
      ::close(fd);
      continue;
    }
    const std::string resp =
        "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
        "Sec-WebSocket-Accept: " + websocket_accept_key(key) + "\r\n\r\n";
    if (!send_all(fd, resp)) {
      ::close(fd);
      continue;
    }
    auto c = std::make_shared<Client>();
    c->fd = fd;
    int id;
    {
      std::lock_guard lk(mu_);
      id = next_client_++;
      clients_[id] = c;
      fresh_.push_back(id);
    }
    c->reader = std::thread([this, id, c, leftover] {
      // Bytes that arrived with the handshake belong to the frame stream.
      if (!leftover.empty()) {
        WsDecoder d;
        d.feed(leftover);
        while (auto m = d.next())
          if (m->opcode == 0x1) {
            std::lock_guard lk(mu_);
            inbox_.push_back({id, m->payload});
          }
      }
      reader_loop(id, c);
    });
  }
}

void ConsoleGateway::reader_loop(int id, std::shared_ptr<Client> c) {
  WsDecoder dec;
  char buf[4096];
  while (c->open && running_) {
    pollfd p{c->fd, POLLIN, 0};
    const int pr = ::poll(&p, 1, 100);
    if (pr == 0) continue;
    if (pr < 0) break;
    const ssize_t n = ::recv(c->fd, buf, sizeof buf, 0);
    if (n <= 0) break;
    dec.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    while (auto m = dec.next()) {
      if (m->opcode == 0x1) {
        std::lock_guard lk(mu_);
        inbox_.push_back({id, std::move(m->payload)});
      } else if (m->opcode == 0x9) {
        std::lock_guard lk(c->write_mu);
        send_all(c->fd, websocket_frame(m->payload, 0xA));
      } else if (m->opcode == 0x8) {
        std::lock_guard lk(c->write_mu);
        send_all(c->fd, websocket_frame(m->payload.substr(0, 2), 0x8));
        c->open = false;
      } else if (m->opcode == 0x2) {
        std::lock_guard lk(c->write_mu);
        send_all(c->fd, websocket_frame(error_frame("binary frames are not supported").dump()));
      }
    }
    if (dec.protocol_error()) {
      std::lock_guard lk(c->write_mu);
      send_all(c->fd, websocket_frame(std::string("\x03\xea", 2), 0x8));
      break;
    }
  }
  c->open = false;
  close_client(id);
}

void ConsoleGateway::close_client(int id) {
  std::lock_guard lk(mu_);
  auto it = clients_.find(id);
  if (it == clients_.end()) return;
  ::shutdown(it->second->fd, SHUT_RDWR);
  // The fd is closed by stop() after the reader joins; detach otherwise.
  if (running_ && it->second->reader.joinable() && it->second->reader.get_id() == std::this_thread::get_id()) {
    it->second->reader.detach();
    ::close(it->second->fd);
    clients_.erase(it);
  }
}

std::vector<ClientCommand> ConsoleGateway::drain() {
  std::lock_guard lk(mu_);
  std::vector<ClientCommand> out(inbox_.begin(), inbox_.end());
  inbox_.clear();
  return out;
}

std::vector<int> ConsoleGateway::clients() const {
  std::lock_guard lk(mu_);
  std::vector<int> out;
  for (const auto& [id, c] : clients_)
    if (c->open) out.push_back(id);
  return out;
}

std::vector<int> ConsoleGateway::take_new_clients() {
  std::lock_guard lk(mu_);
  return std::exchange(fresh_, {});
}

void ConsoleGateway::send(int client, const std::string& text) {
  std::shared_ptr<Client> c;
  {
    std::lock_guard lk(mu_);
    auto it = clients_.find(client);
    if (it == clients_.end()) return;
    c = it->second;
  }
  if (!c->open) return;
  std::lock_guard lk(c->write_mu);
  if (!send_all(c->fd, websocket_frame(text))) c->open = false;
}

void ConsoleGateway::broadcast(const std::string& text) {
  for (const int id : clients()) send(id, text);
}

// ---------------------------------------------------------------------------

RunResult serve_scenario(const Scenario& scenario_in, const RunOptions& options, ConsoleGateway& gateway,
                         const LiveOptions& live) {
  Scenario scenario = scenario_in;
  if (options.seed) scenario.config.seed = *options.seed;
  if (options.time_cap) scenario.time_cap = *options.time_cap;
  Simulation sim = make_simulation(scenario);
  std::optional<ScriptRunner> runner;
  if (live.run_script) runner.emplace(scenario.script);

  std::map<int, MapDeltaTracker> trackers;
  const auto snapshot_every =
      std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::lround(0.1 / scenario.config.dt)));
  const auto wall_start = std::chrono::steady_clock::now();

  while (sim.time() < scenario.time_cap - 1e-9 && !(live.stop && live.stop->load())) {
    for (const int id : gateway.take_new_clients()) trackers[id] = MapDeltaTracker{};
    for (const auto& cc : gateway.drain()) {
      try {
        sim.submit(parse_client_frame(cc.text));
      } catch (const std::exception& e) {
        gateway.send(cc.client, error_frame(e.what()).dump());
      }
    }
    if (runner) runner->before_step(sim);
    const auto events = sim.step();
    if (runner) runner->observe(events);
    for (const auto& e : events) gateway.broadcast(event_frame(e).dump());

    if (sim.steps() % snapshot_every == 0) {
      const auto body = snapshot_payload(sim);
      const auto& map = sim.global_map();
      for (const int id : gateway.clients()) {
        ojson frame;
        frame["type"] = "snapshot";
        frame["payload"] = body;
        frame["payload"]["map_delta"] = trackers[id].next(map, &map);
        gateway.send(id, frame.dump());
      }
    }
    if (live.realtime_factor > 0.0) {
      const auto due = wall_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                        std::chrono::duration<double>(sim.time() / live.realtime_factor));
      std::this_thread::sleep_until(due);
    }
  }
  RunResult res;
  res.status = sim.mission().failed ? RunStatus::mission_failure : RunStatus::ok;
  res.message = sim.mission().failed ? sim.mission().failure_reason : "live session ended";
  res = summarize_run(sim, std::move(res));
  if (options.out_dir) write_artifacts(*options.out_dir, sim, res, options.raster);
  return res;
}

}  // namespace fleetsim
