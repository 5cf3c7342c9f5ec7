#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "fleetsim/station.hpp"

using namespace fleetsim;
using nlohmann::json;

namespace {

const std::filesystem::path kData = std::filesystem::path(FLEETSIM_TEST_DATA_DIR);

json mini_doc() {
  std::ifstream in(kData / "mini_site.json");
  return json::parse(in);
}

const RunResult& mini_run() {
  static const RunResult r = [] {
    RunOptions o;
    o.raster = false;
    return run_scenario(load_scenario(mini_doc()), o);
  }();
  return r;
}

// Error path reported for a document, or "" when it loads.
std::string error_path(const json& doc) {
  try {
    load_scenario(doc);
  } catch (const ScenarioError& e) {
    return e.path();
  }
  return "";
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("fleetsim_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("scenario errors name the offending field") {
  CHECK(error_path(mini_doc()) == "");

  auto d = mini_doc();
  d["robots"][1]["preset"] = "spot";
  CHECK(error_path(d) == "/robots/1/preset");

  d = mini_doc();
  d["robots"][0]["start"] = json::array({100, 100, 0});
  CHECK(error_path(d).rfind("/robots/0/start", 0) == 0);

  d = mini_doc();
  d["world"]["segments"][3]["b"] = d["world"]["segments"][3]["a"];
  CHECK(error_path(d) == "/world/segments/3");

  d = mini_doc();
  d["operator_script"][2]["await"] = "Teleport";
  CHECK(error_path(d) == "/operator_script/2/await");
  d["operator_script"][2]["await"] = "Arrived:spot";
  CHECK(error_path(d) == "/operator_script/2/await");
  d["operator_script"][2]["await"] = "Phase:Lunch";
  CHECK(error_path(d) == "/operator_script/2/await");
  d["operator_script"][2]["await"] = "Phase:ReturnHome";
  CHECK(error_path(d) == "");

  d = mini_doc();
  d["robots"][1]["id"] = "warthog";
  CHECK(error_path(d).rfind("/robots/1", 0) == 0);

  d = mini_doc();
  d["time_cap"] = -1;
  CHECK(error_path(d) == "/time_cap");

  d = mini_doc();
  d["radio"]["assignments"]["hd2"] = "2.4GHz";
  CHECK(error_path(d).rfind("/radio/assignments/hd2", 0) == 0);
}

TEST_CASE("the mini site mission completes") {
  const auto& r = mini_run();
  CHECK(r.status == RunStatus::ok);
  CHECK(r.phase == MissionPhase::complete);
  CHECK(r.sim_time < 200.0);
  CHECK(r.log_digest.size() == 64);
  CHECK(r.map_digest == sha256_hex(std::span<const std::uint8_t>(r.map_bytes)));
  const auto parsed = parse_map_file(r.map_bytes);
  std::size_t annotated = 0;
  for (const auto& rec : parsed.records) annotated += rec.level != 0;
  CHECK(annotated > 0);
}

TEST_CASE("equal seeds reproduce the mission byte for byte") {
  RunOptions o;
  o.raster = false;
  const auto again = run_scenario(load_scenario(mini_doc()), o);
  CHECK(again.log_digest == mini_run().log_digest);
  CHECK(again.map_digest == mini_run().map_digest);
}

TEST_CASE("a different seed changes the log") {
  RunOptions o;
  o.raster = false;
  o.seed = 12345;
  const auto other = run_scenario(load_scenario(mini_doc()), o);
  CHECK(other.log_digest != mini_run().log_digest);
}

TEST_CASE("replaying the mission log reproduces the run") {
  RunOptions o;
  o.raster = false;
  const auto rep = replay_log(load_scenario(mini_doc()), mini_run().log_lines, o);
  CHECK(rep.phase == mini_run().phase);
  CHECK(rep.map_digest == mini_run().map_digest);
}

TEST_CASE("a guess 50 m off never relocalizes and the script deadlocks") {
  auto d = mini_doc();
  for (auto& step : d["operator_script"])
    if (step.contains("guess")) step["guess"]["offset"] = json::array({50.0, 0.0, 0.0});
  RunOptions o;
  o.raster = false;
  o.time_cap = 120.0;
  const auto r = run_scenario(load_scenario(d), o);
  CHECK(r.status == RunStatus::script_deadlock);
  CHECK(r.phase == MissionPhase::await_relocalize);
  CHECK(r.message.find("RelocalizeSuccess") != std::string::npos);
}

TEST_CASE("the step hook can stop a run") {
  RunOptions o;
  o.raster = false;
  int calls = 0;
  const auto r = run_scenario(load_scenario(mini_doc()), o, [&](Simulation&, const std::vector<SimEvent>&) {
    return ++calls < 10;
  });
  CHECK(calls == 10);
  CHECK(r.sim_time == doctest::Approx(10 * 0.05));
}

TEST_CASE("artifacts are written and consistent") {
  const auto dir = temp_dir("artifacts");
  RunOptions o;
  o.out_dir = dir;
  const auto r = run_scenario(load_scenario(mini_doc()), o);
  for (const char* f : {"mission.log", "map.bin", "map.txt", "metrics.json", "map.ppm"})
    CHECK(std::filesystem::exists(dir / f));
  CHECK(read_file_bytes(dir / "map.bin") == r.map_bytes);
  CHECK(read_lines(dir / "mission.log").size() == r.log_lines.size());
  std::ifstream mj(dir / "metrics.json");
  const auto metrics = json::parse(mj);
  const auto want = r.metrics.to_json();
  for (const auto& [k, v] : want.items()) CHECK(metrics.at(k) == v);
  CHECK(metrics.at("map_sha256") == r.map_digest);
  const auto img = read_ppm(dir / "map.ppm");
  CHECK(img.width > 0);
  CHECK(img.height > 0);
}

TEST_CASE("render draws points, levels and paths at the right pixels") {
  MapFileContents m;
  m.origin_frame = "map";
  m.voxel = 0.1;
  m.records.push_back({0.05f, 0.05f, 0, 0, 0});
  m.records.push_back({5.05f, 0.05f, 0, 3, 1000});
  m.records.push_back({0.05f, 5.05f, 0, 1, 4000});
  RenderStyle style;
  style.extent = Bounds{{0, 0}, {10, 10}};
  style.margin = 0.0;
  const auto out = render_map(m, {{"hd2", {{2.05, 2.05}, {2.05, 8.05}}}}, style);
  CHECK(out.image.width == 100);
  CHECK(out.image.height == 100);
  auto pixel_of = [&](Vec2 p) {
    for (int y = 0; y < out.image.height; ++y)
      for (int x = 0; x < out.image.width; ++x)
        if (distance(out.pixel_center(x, y), p) < 0.051) return std::pair{x, y};
    return std::pair{-1, -1};
  };
  auto color_at = [&](Vec2 p) {
    const auto [x, y] = pixel_of(p);
    REQUIRE(x >= 0);
    return out.image.at(x, y);
  };
  CHECK(color_at({0.05, 0.05}) == style.point);
  CHECK(color_at({5.05, 0.05}) == style.red);
  CHECK(color_at({0.05, 5.05}) == style.yellow);
  CHECK(color_at({2.05, 5.05}) == style.hd2_path);
  CHECK(color_at({8.05, 8.05}) == style.background);
  // row 0 is the top of the image
  CHECK(pixel_of({0.05, 9.95}).second == 0);
}

TEST_CASE("ppm round trip") {
  Image img;
  img.width = 3;
  img.height = 2;
  img.pixels = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}, {10, 11, 12}, {13, 14, 15}, {16, 17, 18}};
  const auto p = temp_dir("ppm") / "x.ppm";
  write_ppm(p, img);
  const auto back = read_ppm(p);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("trajectories come from pose records in the requested frame") {
  const auto& r = mini_run();
  const auto tr = trajectories_from_log(r.log_lines, "warthog");
  bool found = false;
  for (const auto& t : tr)
    if (t.robot == "warthog") found = !t.points.empty();
  CHECK(found);
}

TEST_CASE("sha256 of a known string") {
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
