#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "fleetsim/radiation.hpp"

using namespace fleetsim;

namespace {

// Synthetic scan: one hit per (angle, range) pair.
Scan scan_of(const std::vector<std::pair<double, double>>& beams) {
  Scan s;
  s.max_range = 20.0;
  for (const auto& [a, r] : beams) s.beams.push_back({a, r, true});
  return s;
}

RadiationLevel oracle_level(double d) {
  if (d <= 2.0) return RadiationLevel::red;
  if (d <= 3.0) return RadiationLevel::orange;
  return RadiationLevel::yellow;
}

}  // namespace

TEST_CASE("detection threshold is inclusive") {
  const GeigerConfig cfg;
  IntensityReading r;
  r.mean_gray = 111.999;
  CHECK_FALSE(detect(r, cfg));
  r.mean_gray = 112.0;
  CHECK(detect(r, cfg));
  r.mean_gray = 115.0;
  CHECK(detect(r, cfg));
  r.mean_gray = 40.0;
  CHECK_FALSE(detect(r, cfg));
}

TEST_CASE("bin edges are right-inclusive") {
  const GeigerConfig cfg;
  CHECK(bin_level(0.0, cfg) == RadiationLevel::red);
  CHECK(bin_level(1.5, cfg) == RadiationLevel::red);
  CHECK(bin_level(2.0, cfg) == RadiationLevel::red);
  CHECK(bin_level(std::nextafter(2.0, 3.0), cfg) == RadiationLevel::orange);
  CHECK(bin_level(2.5, cfg) == RadiationLevel::orange);
  CHECK(bin_level(3.0, cfg) == RadiationLevel::orange);
  CHECK(bin_level(3.5, cfg) == RadiationLevel::yellow);
  CHECK(bin_level(4.5, cfg) == RadiationLevel::yellow);
  CHECK(bin_level(5.0, cfg) == RadiationLevel::yellow);
  CHECK_THROWS_AS(bin_level(5.01, cfg), std::out_of_range);
  CHECK_THROWS_AS(bin_level(-0.1, cfg), std::out_of_range);
}

TEST_CASE("a wall at 1.8 m is annotated entirely red") {
  std::vector<std::pair<double, double>> beams;
  for (int i = -4; i <= 4; ++i) {
    const double a = i * 0.02;
    beams.push_back({a, 1.8 / std::cos(a)});
  }
  const auto pts = project_detection(scan_of(beams), Pose2D{}, Transform2D::identity(), GeigerConfig{}, 1.0);
  REQUIRE(pts.size() == 9);
  for (const auto& p : pts) CHECK(p.annotation.level == RadiationLevel::red);
}

TEST_CASE("a slanted wall from 1.9 m to 3.1 m splits by distance") {
  // wall points at distances 1.9..3.1 inside the cone
  std::vector<std::pair<double, double>> beams;
  const int n = 61;
  for (int i = 0; i < n; ++i) {
    const double a = -0.09 + 0.18 * i / (n - 1);
    const double d = 1.9 + 1.2 * i / (n - 1);
    beams.push_back({a, d});
  }
  const auto pts = project_detection(scan_of(beams), Pose2D{}, Transform2D::identity(), GeigerConfig{}, 0.0);
  REQUIRE(pts.size() == beams.size());
  int red = 0, orange = 0, yellow = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(pts[i].annotation.level == oracle_level(beams[i].second));
    CHECK(pts[i].annotation.observation_distance == doctest::Approx(beams[i].second));
    red += pts[i].annotation.level == RadiationLevel::red;
    orange += pts[i].annotation.level == RadiationLevel::orange;
    yellow += pts[i].annotation.level == RadiationLevel::yellow;
  }
  CHECK(red > 0);
  CHECK(orange > 0);
  CHECK(yellow > 0);
}

TEST_CASE("projection matches a brute-force cone and range filter") {
  std::mt19937_64 g(21);
  std::uniform_real_distribution<double> ua(-3.1, 3.1), ur(0.1, 8.0), uc(-0.5, 0.5);
  const GeigerConfig cfg;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<double, double>> beams;
    for (int i = 0; i < 100; ++i) beams.push_back({ua(g), ur(g)});
    const Pose2D cam(uc(g), uc(g), ua(g));
    const Transform2D robot(uc(g) * 10, uc(g) * 10, ua(g));
    const auto pts = project_detection(scan_of(beams), cam, robot, cfg, 0.0);
    std::size_t k = 0;
    for (const auto& [a, r] : beams) {
      const Vec2 p{r * std::cos(a), r * std::sin(a)};
      const Vec2 rel = p - cam.translation();
      const double d = norm(rel);
      const double bearing = angle_difference(std::atan2(rel.y, rel.x), cam.theta);
      if (d > cfg.max_projection_range || std::fabs(bearing) > cfg.fov / 2) continue;
      REQUIRE(k < pts.size());
      CHECK(distance(pts[k].map_point, robot.apply(p)) < 1e-12);
      CHECK(pts[k].annotation.level == oracle_level(d));
      ++k;
    }
    CHECK(k == pts.size());
  }
}

TEST_CASE("a detection with nothing in the cone annotates no points") {
  // walls only behind the robot
  const auto pts = project_detection(scan_of({{3.0, 1.0}, {-3.0, 1.0}, {std::numbers::pi, 2.0}}), Pose2D{},
                                     Transform2D::identity(), GeigerConfig{}, 0.0);
  CHECK(pts.empty());
}

TEST_CASE("misses are never projected") {
  Scan s;
  s.beams.push_back({0.0, 1.0, false});
  CHECK(project_detection(s, Pose2D{}, Transform2D::identity(), GeigerConfig{}, 0.0).empty());
}

TEST_CASE("closer observation replaces a farther one") {
  AnnotatedMap m("map", 0.1);
  m.insert({1.05, 0.05});
  const Vec2 p{1.05, 0.05};
  CHECK(update_annotations(m, {{p, {RadiationLevel::orange, 2.5, 1.0}}}) == 1);
  CHECK(update_annotations(m, {{p, {RadiationLevel::yellow, 3.5, 2.0}}}) == 0);
  CHECK(m.annotation(0)->level == RadiationLevel::orange);
  CHECK(update_annotations(m, {{p, {RadiationLevel::red, 1.5, 3.0}}}) == 1);
  CHECK(m.annotation(0)->level == RadiationLevel::red);
  // equal distance: the earlier observation stays
  CHECK(update_annotations(m, {{p, {RadiationLevel::red, 1.5, 4.0}}}) == 0);
  CHECK(m.annotation(0)->observed_at == 3.0);
}

TEST_CASE("points outside the map are skipped") {
  AnnotatedMap m("map", 0.1);
  m.insert({0.05, 0.05});
  CHECK(update_annotations(m, {{{5, 5}, {RadiationLevel::red, 1.0, 0.0}}}) == 0);
  CHECK(m.annotations().empty());
}

TEST_CASE("max_level keeps the most severe level") {
  AnnotatedMap m("map", 0.1);
  m.insert({0.05, 0.05});
  const Vec2 p{0.05, 0.05};
  update_annotations(m, {{p, {RadiationLevel::red, 1.9, 0.0}}}, AnnotationRule::max_level);
  CHECK(update_annotations(m, {{p, {RadiationLevel::yellow, 0.5, 1.0}}}, AnnotationRule::max_level) == 0);
  CHECK(m.annotation(0)->level == RadiationLevel::red);
  CHECK(update_annotations(m, {{p, {RadiationLevel::red, 1.0, 2.0}}}, AnnotationRule::max_level) == 1);
  CHECK(m.annotation(0)->observation_distance == 1.0);
}

TEST_CASE("annotation state does not depend on observation order under closer-wins") {
  std::mt19937_64 g(22);
  std::uniform_real_distribution<double> ud(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ProjectedPoint> obs;
    for (int i = 0; i < 10; ++i) {
      const double d = ud(g);
      obs.push_back({{0.05, 0.05}, {oracle_level(d), d, static_cast<double>(i)}});
    }
    AnnotatedMap a("map", 0.1), b("map", 0.1);
    a.insert({0.05, 0.05});
    b.insert({0.05, 0.05});
    update_annotations(a, obs);
    std::reverse(obs.begin(), obs.end());
    update_annotations(b, obs);
    CHECK(a.annotation(0)->observation_distance == b.annotation(0)->observation_distance);
    CHECK(a.annotation(0)->level == b.annotation(0)->level);
  }
}

TEST_CASE("geiger config validation") {
  GeigerConfig c;
  c.threshold = 300;
  CHECK_THROWS(c.validate());
  c = GeigerConfig{};
  c.bin_edges = {3.0, 2.0, 4.0};
  CHECK_THROWS(c.validate());
  c = GeigerConfig{};
  c.max_projection_range = 3.5;
  CHECK_THROWS(c.validate());
  CHECK_NOTHROW(GeigerConfig{}.validate());
}
