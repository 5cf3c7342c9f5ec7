#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fleetsim/fleet.hpp"
#include "fleetsim/station.hpp"
#include "json.hpp"

namespace fleetsim {

inline constexpr int kWireSchemaVersion = 1;
inline constexpr std::size_t kSnapshotMaxBeams = 90;

/// Incremental view of the global map for one console. The first delta, and
/// any delta after the map is replaced (relocalization merge), carries
/// reset = true and the full point list.
class MapDeltaTracker {
 public:
  nlohmann::ordered_json next(const AnnotatedMap& map, const void* identity);

 private:
  const void* identity_ = nullptr;
  std::string frame_;
  std::uint64_t generation_ = 0;
  std::vector<MapRecord> mirror_;
};

/// Client-side reconstruction of a map from a delta stream.
class MapReplica {
 public:
  void apply(const nlohmann::json& delta);
  std::vector<std::uint8_t> serialize() const { return serialize_map(frame_, voxel_, records_); }
  const std::vector<MapRecord>& records() const { return records_; }
  std::uint64_t generation() const { return generation_; }

 private:
  std::string frame_;
  double voxel_ = 0.1;
  std::uint64_t generation_ = 0;
  std::vector<MapRecord> records_;
};

/// Snapshot frame body shared by every console; the map delta is added per
/// connection.
nlohmann::ordered_json snapshot_payload(const Simulation& sim);
nlohmann::ordered_json decimated_scan(const Scan& scan, std::size_t max_beams = kSnapshotMaxBeams);
nlohmann::ordered_json event_frame(const SimEvent& e);
nlohmann::ordered_json error_frame(const std::string& message);

/// Parses one client text frame into a command; the error text is suitable
/// for an error frame.
OperatorCommand parse_client_frame(std::string_view text);

// ---------------------------------------------------------------------------
// Websocket server (RFC 6455, text frames only, no extensions).

std::string websocket_accept_key(const std::string& client_key);
/// Encodes a single unfragmented frame. Server frames are unmasked.
std::string websocket_frame(std::string_view payload, std::uint8_t opcode = 0x1, bool fin = true,
                            std::optional<std::uint32_t> mask = std::nullopt);

struct WsMessage {
  std::uint8_t opcode = 0x1;
  std::string payload;
};

/// Incremental frame decoder; reassembles fragmented messages.
class WsDecoder {
 public:
  void feed(std::string_view bytes);
  std::optional<WsMessage> next();
  bool protocol_error() const { return error_; }

 private:
  std::string buf_;
  std::string partial_;
  std::uint8_t partial_opcode_ = 0;
  bool error_ = false;
};

struct ClientCommand {
  int client = 0;
  std::string text;
};

class ConsoleGateway {
 public:
  /// Binds immediately; port 0 picks a free port.
  ConsoleGateway(const std::string& host, std::uint16_t port);
  ~ConsoleGateway();
  ConsoleGateway(const ConsoleGateway&) = delete;
  ConsoleGateway& operator=(const ConsoleGateway&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

  /// Text frames received since the last call, in arrival order.
  std::vector<ClientCommand> drain();
  std::vector<int> clients() const;
  /// Clients connected since the last call (they need a map reset).
  std::vector<int> take_new_clients();
  void send(int client, const std::string& text);
  void broadcast(const std::string& text);

 private:
  struct Client {
    int fd = -1;
    std::thread reader;
    std::mutex write_mu;
    std::atomic<bool> open{true};
  };

  void accept_loop();
  void reader_loop(int id, std::shared_ptr<Client> c);
  void close_client(int id);

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::map<int, std::shared_ptr<Client>> clients_;
  std::vector<int> fresh_;
  std::deque<ClientCommand> inbox_;
  int next_client_ = 1;
};

struct LiveOptions {
  double realtime_factor = 1.0;  // sim seconds per wall second; 0 runs unthrottled
  bool run_script = false;
  const std::atomic<bool>* stop = nullptr;
};

/// Live mode: the simulation paced against the wall clock, snapshots pushed
/// at 10 Hz of sim time, console commands injected at the base station.
RunResult serve_scenario(const Scenario& scenario, const RunOptions& options, ConsoleGateway& gateway,
                         const LiveOptions& live);

}  // namespace fleetsim
