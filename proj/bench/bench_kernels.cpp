#include <benchmark/benchmark.h>

#include <random>

#include "fleetsim/kernels.hpp"
#include "fleetsim/station.hpp"

using namespace fleetsim;

namespace {

const Scenario& demo() {
  static const Scenario s = load_scenario_file(std::filesystem::path(FLEETSIM_SCENARIO_DIR) / "demo_site.json");
  return s;
}

std::vector<double> beam_angles(int n) {
  LidarSpec spec;
  spec.beam_count = n;
  std::vector<double> a(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] = spec.beam_angle(i);
  return a;
}

struct NeighborFixture {
  std::vector<Vec2> points, queries;
  PointGrid grid;
  explicit NeighborFixture(std::size_t n)
      : points(make(n, 1)), queries(make(n / 4, 2)), grid(0.5, points) {}
  static std::vector<Vec2> make(std::size_t n, unsigned seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(-20, 20);
    std::vector<Vec2> v(n);
    for (auto& p : v) p = {u(g), u(g)};
    return v;
  }
};

template <bool Parallel>
void BM_CastBeams(benchmark::State& state) {
  const auto& world = demo().world;
  const auto angles = beam_angles(static_cast<int>(state.range(0)));
  std::vector<double> out(angles.size());
  const Pose2D pose(40, 25, 0.3);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::cast_beams(world, pose, angles, 20.0, out);
    else
      kernels::serial::cast_beams(world, pose, angles, 20.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = Parallel ? kernels::max_threads() : 1;
}

template <bool Parallel>
void BM_NearestNeighbors(benchmark::State& state) {
  const NeighborFixture f(static_cast<std::size_t>(state.range(0)));
  std::vector<NeighborMatch> out(f.queries.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::nearest_neighbors(f.grid, f.queries, 0.5, out);
    else
      kernels::serial::nearest_neighbors(f.grid, f.queries, 0.5, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.queries.size()));
  state.counters["threads"] = Parallel ? kernels::max_threads() : 1;
}

}  // namespace

BENCHMARK(BM_CastBeams<false>)->Name("cast_beams/serial")->Arg(1024)->Arg(4096);
BENCHMARK(BM_CastBeams<true>)->Name("cast_beams/omp")->Arg(1024)->Arg(4096);
BENCHMARK(BM_NearestNeighbors<false>)->Name("nearest_neighbors/serial")->Arg(20000)->Arg(200000);
BENCHMARK(BM_NearestNeighbors<true>)->Name("nearest_neighbors/omp")->Arg(20000)->Arg(200000);

BENCHMARK_MAIN();
