#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <random>

#include "fleetsim/kernels.hpp"
#include "fleetsim/station.hpp"

using namespace fleetsim;

namespace {

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

const Scenario& demo() {
  static const Scenario s = load_scenario_file(std::filesystem::path(FLEETSIM_SCENARIO_DIR) / "demo_site.json");
  return s;
}

}  // namespace

TEST_CASE("parallel beam casting is bit-identical to the serial reference") {
  const auto& world = demo().world;
  LidarSpec spec;
  spec.beam_count = 1024;
  std::vector<double> angles(spec.beam_count);
  for (int i = 0; i < spec.beam_count; ++i) angles[i] = spec.beam_angle(i);
  std::vector<double> par(angles.size()), ser(angles.size());

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ux(2, 78), uy(2, 48), ua(-M_PI, M_PI);
  for (int i = 0; i < 100; ++i) {
    const Pose2D pose(ux(rng), uy(rng), ua(rng));
    kernels::cast_beams(world, pose, angles, 20.0, par);
    kernels::serial::cast_beams(world, pose, angles, 20.0, ser);
    for (std::size_t k = 0; k < angles.size(); ++k) REQUIRE(bit_equal(par[k], ser[k]));
  }
}

TEST_CASE("parallel nearest neighbours match the serial reference") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-20, 20);
  std::vector<Vec2> pts(20000);
  for (auto& p : pts) p = {u(rng), u(rng)};
  // duplicates exercise the lowest-index tie rule
  for (int i = 0; i < 100; ++i) pts.push_back(pts[static_cast<std::size_t>(i) * 7]);
  const PointGrid grid(1.0, pts);
  std::vector<Vec2> queries(5000);
  for (auto& q : queries) q = {u(rng), u(rng)};
  std::vector<NeighborMatch> par(queries.size()), ser(queries.size());
  kernels::nearest_neighbors(grid, queries, 0.5, par);
  kernels::serial::nearest_neighbors(grid, queries, 0.5, ser);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    REQUIRE(par[i].index == ser[i].index);
    REQUIRE(bit_equal(par[i].dist2, ser[i].dist2));
  }
}

TEST_CASE("grid nearest neighbour matches brute force") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<Vec2> pts(800);
  for (auto& p : pts) p = {u(rng), u(rng)};
  const PointGrid grid(0.7, pts);
  for (int i = 0; i < 2000; ++i) {
    const Vec2 q{u(rng), u(rng)};
    std::int64_t best = -1;
    double bd = INFINITY;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const double d2 = dot(pts[k] - q, pts[k] - q);
      if (d2 < bd) {
        bd = d2;
        best = static_cast<std::int64_t>(k);
      }
    }
    const auto m = grid.nearest(q, 0.6);
    if (bd > 0.36) {
      CHECK(m.index == -1);
    } else {
      CHECK(m.index == best);
      CHECK(m.dist2 == bd);
    }
  }
}

TEST_CASE("missed beams are infinite") {
  WorldModel open;
  open.bounds = {{-5, -5}, {5, 5}};
  std::vector<double> angles{0.0, 1.0, 2.0}, out(3);
  kernels::cast_beams(open, {}, angles, 10.0, out);
  for (double d : out) CHECK(std::isinf(d));
  CHECK(kernels::max_threads() >= 1);
}
