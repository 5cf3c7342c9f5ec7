#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <set>

#include "fleetsim/registration.hpp"
#include "fleetsim/sensors.hpp"

using namespace fleetsim;

namespace {

// Room outline with an inner box. Samples are jittered within equal arclength
// strata so no two sit closer than a fraction of the spacing.
PointCloud room_cloud(int count = 500, std::uint64_t seed = 7) {
  const std::vector<std::pair<Vec2, Vec2>> segs = {
      {{-4, -3}, {5, -3}}, {{5, -3}, {5, 1}},  {{5, 1}, {2, 1}},       {{2, 1}, {2, 4}},
      {{2, 4}, {-4, 4}},   {{-4, 4}, {-4, -3}}, {{-1.5, -0.5}, {0.3, -0.5}}, {{0.3, -0.5}, {0.3, 0.4}},
      {{0.3, 0.4}, {-1.5, 0.4}}, {{-1.5, 0.4}, {-1.5, -0.5}}, {{3.2, -2.0}, {4.0, -1.2}},
  };
  double total = 0.0;
  for (const auto& [a, b] : segs) total += distance(a, b);
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  PointCloud c{{}, std::nullopt, "room"};
  for (int i = 0; i < count; ++i) {
    double s = (i + u(g)) * total / count;
    for (const auto& [a, b] : segs) {
      const double len = distance(a, b);
      if (s <= len) {
        c.points.push_back(a + (b - a) * (s / len));
        break;
      }
      s -= len;
    }
  }
  return c;
}

PointCloud moved(const PointCloud& c, const Transform2D& t) { return transform_cloud(c, t, c.frame_id); }

double pose_error(const Transform2D& a, const Transform2D& b) {
  return std::max(distance(a.translation(), b.translation()), std::fabs(angle_difference(a.theta, b.theta)));
}

AnnotatedMap map_of(const PointCloud& c, double voxel = AnnotatedMap::kDefaultVoxel) {
  AnnotatedMap m("map", voxel);
  update_map(m, c, Transform2D::identity());
  return m;
}

}  // namespace

TEST_CASE("ICP recovers a 10 degree rotation with a small offset") {
  const auto target = room_cloud();
  const Transform2D truth(0.3, -0.2, 10.0 * std::numbers::pi / 180.0);
  const auto source = moved(target, truth.inverse());
  const auto r = icp_register(source, target, Transform2D::identity(), IcpParams{});
  CHECK(r.converged);
  CHECK(r.status == IcpStatus::converged);
  CHECK(pose_error(r.transform, truth) < 1e-6);
  CHECK(r.mean_residual < 1e-6);
}

TEST_CASE("ICP on identical clouds converges in one iteration") {
  const auto c = room_cloud();
  const auto r = icp_register(c, c, Transform2D::identity(), IcpParams{});
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK(pose_error(r.transform, Transform2D::identity()) < 1e-12);
  CHECK(r.mean_residual == 0.0);
}

TEST_CASE("ICP residual history never increases") {
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> ua(-0.2, 0.2), ut(-0.4, 0.4);
  std::normal_distribution<double> noise(0.0, 0.01);
  const auto target = room_cloud();
  for (int trial = 0; trial < 50; ++trial) {
    const Transform2D truth(ut(g), ut(g), ua(g));
    auto source = moved(target, truth.inverse());
    for (auto& p : source.points) p = {p.x + noise(g), p.y + noise(g)};
    IcpParams params;
    params.trim_ratio = 1.0;
    const auto r = icp_register(source, target, Transform2D::identity(), params);
    REQUIRE(r.residual_history.size() >= 2);
    for (std::size_t i = 1; i < r.residual_history.size(); ++i)
      CHECK(r.residual_history[i] <= r.residual_history[i - 1] + 1e-12);
  }
}

TEST_CASE("registering the other way yields the inverse transform") {
  const auto target = room_cloud();
  const Transform2D truth(-0.25, 0.15, -0.12);
  const auto source = moved(target, truth.inverse());
  const auto fwd = icp_register(source, target, Transform2D::identity(), IcpParams{});
  const auto back = icp_register(target, source, Transform2D::identity(), IcpParams{});
  CHECK(pose_error(fwd.transform * back.transform, Transform2D::identity()) < 1e-6);
}

TEST_CASE("disjoint clouds report insufficient overlap") {
  const auto target = room_cloud();
  const auto source = moved(target, Transform2D(100, 100, 0));
  const auto r = icp_register(source, target, Transform2D::identity(), IcpParams{});
  CHECK(r.status == IcpStatus::insufficient_overlap);
  CHECK_FALSE(r.converged);
}

TEST_CASE("ICP rejects tiny inputs and bad parameters") {
  const PointCloud two{{{0, 0}, {1, 0}}, std::nullopt, "s"};
  CHECK_THROWS_AS(icp_register(two, room_cloud(), Transform2D::identity(), IcpParams{}), std::invalid_argument);
  IcpParams bad;
  bad.trim_ratio = 0.0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("update_map inserts only new voxels") {
  AnnotatedMap m("map", 0.1);
  const PointCloud c{{{0.01, 0.01}, {0.02, 0.02}, {0.5, 0.5}}, std::nullopt, "scan"};
  CHECK(update_map(m, c, Transform2D::identity()) == 2);
  CHECK(m.size() == 2);
  CHECK(m.points()[0] == Vec2{0.01, 0.01});
  CHECK(update_map(m, c, Transform2D::identity()) == 0);
  CHECK(update_map(m, c, Transform2D(1, 0, 0)) == 2);
  CHECK(m.find({1.05, 0.05}).has_value());
}

TEST_CASE("update_map keeps existing annotations") {
  AnnotatedMap m("map", 0.1);
  update_map(m, PointCloud{{{0.05, 0.05}}, std::nullopt, "s"}, Transform2D::identity());
  m.set_annotation(0, {RadiationLevel::red, 1.0, 2.0});
  update_map(m, PointCloud{{{0.06, 0.06}, {3, 3}}, std::nullopt, "s"}, Transform2D::identity());
  REQUIRE(m.annotation(0));
  CHECK(m.annotation(0)->level == RadiationLevel::red);
}

TEST_CASE("no two map points share a voxel") {
  std::mt19937_64 g(12);
  std::uniform_real_distribution<double> u(-10, 10), ua(-3.2, 3.2);
  AnnotatedMap m("map", 0.1);
  for (int k = 0; k < 20; ++k) {
    PointCloud c{{}, std::nullopt, "s"};
    for (int i = 0; i < 500; ++i) c.points.push_back({u(g), u(g)});
    update_map(m, c, Transform2D(u(g), u(g), ua(g)));
  }
  std::set<std::pair<long long, long long>> keys;
  for (const auto& p : m.points()) {
    const auto key = std::make_pair(static_cast<long long>(std::floor(p.x / 0.1)),
                                    static_cast<long long>(std::floor(p.y / 0.1)));
    CHECK(keys.insert(key).second);
  }
}

TEST_CASE("relocalizing a scan against its own map succeeds at identity") {
  const auto c = room_cloud();
  const auto m = map_of(c);
  const auto r = relocalize(m, c, Transform2D::identity());
  CHECK(r.success);
  CHECK(pose_error(r.pose, Transform2D::identity()) < 0.05);
  CHECK(r.candidates == 9 * 8);
}

TEST_CASE("relocalizing in an unmapped area fails") {
  const auto m = map_of(room_cloud());
  PointCloud other{{}, std::nullopt, "scan"};
  for (int i = 0; i < 200; ++i) {
    const double a = i * 2.0 * std::numbers::pi / 200.0;
    other.points.push_back({60 + 1.3 * std::cos(a), 60 + 0.7 * std::sin(3 * a)});
  }
  const auto r = relocalize(m, other, Transform2D(60, 60, 0));
  CHECK_FALSE(r.success);
}

TEST_CASE("merge folds points and annotations through the transform") {
  AnnotatedMap global("map", 0.1);
  global.insert({0.05, 0.05});
  AnnotatedMap incoming("warthog", 0.1);
  incoming.insert({0.05, 0.05});
  incoming.insert({1.05, 0.05});
  incoming.set_annotation(1, {RadiationLevel::orange, 2.5, 1.0});
  merge_maps(global, incoming, Transform2D(1, 0, 0));
  CHECK(global.size() == 3);
  const auto idx = global.find({2.05, 0.05});
  REQUIRE(idx);
  REQUIRE(global.annotation(*idx));
  CHECK(global.annotation(*idx)->level == RadiationLevel::orange);
}

TEST_CASE("merge combines annotations under the rule") {
  auto make = [](RadiationAnnotation a) {
    AnnotatedMap m("x", 0.1);
    m.insert({0.05, 0.05});
    m.set_annotation(0, a);
    return m;
  };
  const RadiationAnnotation near_yellow{RadiationLevel::yellow, 1.0, 0.0};
  const RadiationAnnotation far_red{RadiationLevel::red, 3.0, 0.0};

  auto g1 = make(near_yellow);
  merge_maps(g1, make(far_red), Transform2D::identity(), AnnotationRule::closer_wins);
  CHECK(g1.annotation(0)->level == RadiationLevel::yellow);

  auto g2 = make(near_yellow);
  merge_maps(g2, make(far_red), Transform2D::identity(), AnnotationRule::max_level);
  CHECK(g2.annotation(0)->level == RadiationLevel::red);
}

TEST_CASE("merging a map into an empty one at identity reproduces it") {
  const auto src = map_of(room_cloud());
  AnnotatedMap dst("map", src.voxel());
  merge_maps(dst, src, Transform2D::identity());
  CHECK(dst.points() == src.points());
}

TEST_CASE("map serialization round trip") {
  AnnotatedMap m("warthog_map", 0.1);
  m.insert({1.25, -3.5}, 130.0);
  m.insert({-7.75, 2.0}, 0.0);
  m.set_annotation(1, {RadiationLevel::orange, 2.345, 9.0});
  const auto bytes = serialize_map(m);
  CHECK(bytes.size() == map_header_size("warthog_map") + 2 * kMapRecordSize);
  CHECK(map_header_size("warthog_map") == 18 + 11);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FSMP");

  const auto back = deserialize_map(bytes);
  CHECK(back.origin_frame() == "warthog_map");
  CHECK(back.voxel() == doctest::Approx(0.1));
  REQUIRE(back.size() == 2);
  CHECK(back.points()[0] == Vec2{1.25, -3.5});
  CHECK(back.descriptors()[0] == 130.0);
  REQUIRE(back.annotation(1));
  CHECK(back.annotation(1)->level == RadiationLevel::orange);
  CHECK(back.annotation(1)->observation_distance == doctest::Approx(2.345).epsilon(1e-9));
  CHECK(serialize_map(back) == bytes);
}

TEST_CASE("truncated or foreign bytes are rejected") {
  AnnotatedMap m("map", 0.1);
  m.insert({1, 1});
  auto bytes = serialize_map(m);
  auto cut = bytes;
  cut.pop_back();
  CHECK_THROWS(deserialize_map(cut));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS(deserialize_map(bad));
}

TEST_CASE("voxel downsample keeps the first point per voxel") {
  const PointCloud c{{{0.01, 0.01}, {0.09, 0.09}, {0.15, 0.01}, {0.02, 0.03}}, std::nullopt, "s"};
  const auto d = voxel_downsample(c, 0.1);
  REQUIRE(d.size() == 2);
  CHECK(d.points[0] == Vec2{0.01, 0.01});
  CHECK(d.points[1] == Vec2{0.15, 0.01});
}
