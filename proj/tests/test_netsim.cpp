#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <set>

#include "fleetsim/map.hpp"
#include "fleetsim/netsim.hpp"

using namespace fleetsim;

namespace {

constexpr double kDt = 0.05;

// Reference values from tests/oracles/closed_form.py.
constexpr double kOpenField100m915 = 94.0;
constexpr double kTwoWalls10m5GHz = 98.0;
constexpr double kBulk1MBSeconds = 2.0;

WorldModel field(double size = 500) {
  WorldModel w;
  w.bounds = {{-size, -size}, {size, size}};
  return w;
}

RadioNode node(NodeId id, Vec2 p, RadioProfile prof = RadioProfile::band_915mhz()) {
  return {id, "n" + std::to_string(id), p, prof};
}

Message msg(MessageClass cls, std::size_t size, NodeId from, NodeId to, double t) {
  Message m;
  m.cls = cls;
  m.payload_size = size;
  m.source = from;
  m.destination = to;
  m.enqueue_time = t;
  return m;
}

}  // namespace

TEST_CASE("path loss reference examples") {
  const auto w = field();
  CHECK(link_loss(w, node(0, {0, 0}), node(1, {100, 0})) == doctest::Approx(kOpenField100m915).epsilon(1e-12));

  WorldModel walls = field();
  walls.segments.push_back({{3, -5}, {3, 5}, 5.0, true});
  walls.segments.push_back({{6, -5}, {6, 5}, 5.0, true});
  const auto five = RadioProfile::band_5ghz();
  const double l = link_loss(walls, node(0, {0, 0}, five), node(1, {10, 0}, five));
  CHECK(l == doctest::Approx(kTwoWalls10m5GHz).epsilon(1e-12));
  CHECK(l > five.link_budget);

  CHECK(link_loss(w, node(0, {0, 0}), node(1, {0.5, 0})) == RadioProfile::band_915mhz().ref_loss_at_1m);
  CHECK(link_loss(w, node(0, {0, 0}), node(1, {1, 0})) == RadioProfile::band_915mhz().ref_loss_at_1m);
}

TEST_CASE("mixed-profile links use the lossier endpoint") {
  const auto w = field();
  const auto a = node(0, {0, 0}), b = node(1, {50, 0}, RadioProfile::band_5ghz());
  const double mixed = link_loss(w, a, b);
  CHECK(mixed == std::max(link_loss(w, a, node(1, {50, 0})), link_loss(w, node(0, {0, 0}, b.profile), b)));
}

TEST_CASE("loss is symmetric and increasing in distance") {
  WorldModel w = field();
  std::mt19937_64 g(41);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 20; ++i) w.segments.push_back({{u(g), u(g)}, {u(g), u(g)}, 4.0, true});
  for (int i = 0; i < 2000; ++i) {
    const auto a = node(0, {u(g), u(g)}), b = node(1, {u(g), u(g)}, RadioProfile::band_5ghz());
    CHECK(link_loss(w, a, b) == link_loss(w, b, a));
  }
  const auto open = field();
  double prev = -INFINITY;
  for (int k = 0; k < 200; ++k) {
    const double l = link_loss(open, node(0, {0, 0}), node(1, {1.0 + 0.5 * (k + 1), 0}));
    CHECK(l > prev);
    prev = l;
  }
}

TEST_CASE("routes are direct when every link is up") {
  const auto w = field();
  const std::vector<RadioNode> nodes{node(0, {0, 0}), node(1, {20, 0}), node(2, {0, 20})};
  const auto rt = route(nodes, w);
  for (NodeId a = 0; a < 3; ++a)
    for (NodeId b = 0; b < 3; ++b)
      if (a != b) {
        CHECK(rt.get(a, b).hops == 1);
        CHECK(rt.get(a, b).path == std::vector<NodeId>{a, b});
      }
}

TEST_CASE("a down link is bypassed through a relay") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {50, 0}), node(2, {60, 30})});
  net.force_link_down(0, 2, true);
  net.step(kDt);
  CHECK(net.routes().get(0, 2).path == std::vector<NodeId>{0, 1, 2});
  CHECK(net.routes().next_hop(0, 2) == 1);
  CHECK(net.routes().get(2, 0).path == std::vector<NodeId>{2, 1, 0});
}

TEST_CASE("an isolated node is unreachable and sends to it are rejected") {
  const auto w = field(2000);
  Network net(w, {node(0, {0, 0}), node(1, {20, 0}), node(2, {1500, 0})});
  net.step(kDt);
  CHECK_FALSE(net.routes().get(0, 2).reachable);
  CHECK_FALSE(net.routes().next_hop(0, 2).has_value());
  CHECK(net.send(msg(MessageClass::control, 64, 0, 2, net.now())) == SendStatus::rejected_unreachable);
  CHECK(net.send(msg(MessageClass::control, 64, 0, 1, net.now())) == SendStatus::accepted);
}

TEST_CASE("a small control message arrives on the next step") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {20, 0})});
  net.step(kDt);
  const double t0 = net.now();
  REQUIRE(net.send(msg(MessageClass::control, 64, 0, 1, t0)) == SendStatus::accepted);
  const auto rep = net.step(kDt);
  REQUIRE(rep.delivered.size() == 1);
  CHECK(rep.delivered[0].hops == 1);
  CHECK(rep.delivered[0].arrival_time - t0 >= RadioProfile::band_915mhz().base_latency);
  CHECK(rep.delivered[0].arrival_time <= rep.time_end);
}

TEST_CASE("1 MB of bulk data takes about 2 s at 4 Mbit/s") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {20, 0})});
  net.step(kDt);
  const double t0 = net.now();
  REQUIRE(net.send(msg(MessageClass::bulk, 1000000, 0, 1, t0)) == SendStatus::accepted);
  double arrival = -1;
  for (int i = 0; i < 200 && arrival < 0; ++i)
    for (const auto& d : net.step(kDt).delivered) arrival = d.arrival_time;
  REQUIRE(arrival > 0);
  CHECK(std::fabs((arrival - t0) - kBulk1MBSeconds) <= kDt + RadioProfile::band_915mhz().base_latency);
}

TEST_CASE("control overtakes bulk on a saturated link") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {20, 0})});
  net.step(kDt);
  net.send(msg(MessageClass::bulk, 500000, 0, 1, net.now()));
  net.send(msg(MessageClass::control, 64, 0, 1, net.now()));
  std::vector<MessageClass> order;
  for (int i = 0; i < 100 && order.size() < 2; ++i)
    for (const auto& d : net.step(kDt).delivered) order.push_back(d.message.cls);
  REQUIRE(order.size() == 2);
  CHECK(order[0] == MessageClass::control);
  CHECK(order[1] == MessageClass::bulk);
}

TEST_CASE("oversized control messages are refused") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {20, 0})});
  CHECK_THROWS(net.send(msg(MessageClass::control, kMaxControlBytes + 1, 0, 1, 0.0)));
}

TEST_CASE("random load: capacity, unique delivery and bounded control latency") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {60, 0}), node(2, {120, 0}), node(3, {60, 60})});
  net.force_link_down(0, 2, true);
  net.step(kDt);
  std::mt19937_64 g(42);
  std::uniform_int_distribution<int> un(0, 3), ucls(0, 2);
  std::uniform_int_distribution<std::size_t> usz(1, 200000);
  std::set<std::uint64_t> seen;
  std::size_t sent = 0;
  for (int step = 0; step < 400; ++step) {
    for (int k = 0; k < 3; ++k) {
      const int a = un(g), b = un(g);
      if (a == b) continue;
      const auto cls = static_cast<MessageClass>(ucls(g));
      auto m = msg(cls, cls == MessageClass::control ? 64 : usz(g), a, b, net.now());
      m.flow = static_cast<std::uint64_t>(a * 10 + b);
      if (net.send(m) == SendStatus::accepted) ++sent;
    }
    const auto rep = net.step(kDt);
    for (const auto& u : rep.usage) CHECK(u.bits <= u.capacity_bits + 1e-6);
    for (const auto& d : rep.delivered) {
      CHECK(seen.insert(d.message.id).second);
      if (d.message.cls == MessageClass::control) {
        const double bound = d.hops * RadioProfile::band_915mhz().base_latency + kDt;
        CHECK(d.arrival_time - d.message.enqueue_time <= bound + 1e-12);
      }
    }
  }
  CHECK(seen.size() <= sent);
  CHECK(seen.size() > 100);
}

TEST_CASE("a newer stream frame replaces an unsent one") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {20, 0})});
  net.step(kDt);
  net.send(msg(MessageClass::bulk, 2000000, 0, 1, net.now()));
  std::size_t dropped = 0;
  for (int i = 0; i < 5; ++i) {
    auto m = msg(MessageClass::stream, 40000, 0, 1, net.now());
    m.flow = 7;
    net.send(m);
  }
  for (int i = 0; i < 10; ++i) dropped += net.step(kDt).stream_frames_dropped;
  CHECK(dropped == 4);
}

TEST_CASE("an empty map transfers as one header chunk in one step") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {20, 0})});
  const auto bytes = serialize_map(AnnotatedMap("warthog"));
  CHECK(bytes.size() == map_header_size("warthog"));
  const int id = net.start_map_transfer(0, 1, bytes);
  CHECK(net.session(id).chunks_total == 1);
  net.step(kDt);
  CHECK(net.session(id).state == SessionState::complete);
  CHECK(net.session(id).chunks_acked == 1);
}

TEST_CASE("a transfer stalls during an outage and resumes without resending") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {20, 0})});
  const int id = net.start_map_transfer(0, 1, std::vector<std::uint8_t>(1000000, 0xAB));
  for (int i = 0; i < 10; ++i) net.step(kDt);
  net.force_link_down(0, 1, true);
  bool stalled = false;
  std::size_t acked = net.session(id).chunks_acked;
  for (int i = 0; i < 40; ++i) {
    net.step(kDt);
    stalled |= net.session(id).state == SessionState::stalled;
    CHECK(net.session(id).chunks_acked >= acked);
    acked = net.session(id).chunks_acked;
  }
  CHECK(stalled);
  const auto during = net.session(id).chunks_acked;
  net.force_link_down(0, 1, false);
  for (int i = 0; i < 200 && net.session(id).state != SessionState::complete; ++i) {
    net.step(kDt);
    CHECK(net.session(id).chunks_acked >= during);
  }
  CHECK(net.session(id).state == SessionState::complete);
  CHECK(net.session(id).chunks_acked == net.session(id).chunks_total);
}

TEST_CASE("an aborted transfer stops") {
  const auto w = field();
  Network net(w, {node(0, {0, 0}), node(1, {20, 0})});
  const int id = net.start_map_transfer(0, 1, std::vector<std::uint8_t>(1000000, 1));
  net.step(kDt);
  net.abort_transfer(id);
  for (int i = 0; i < 100; ++i) net.step(kDt);
  CHECK(net.session(id).state == SessionState::aborted);
  CHECK(net.session(id).chunks_acked < net.session(id).chunks_total);
}
