#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "fleetsim/station.hpp"
#include "fleetsim/wire.hpp"

using namespace fleetsim;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void print_result(const RunResult& r) {
  std::cout << "status: " << static_cast<int>(r.status) << " (" << r.message << ")\n"
            << "phase: " << to_string(r.phase) << "\n"
            << "sim_time: " << r.sim_time << "\n"
            << "log_sha256: " << r.log_digest << "\n"
            << "map_sha256: " << r.map_digest << "\n";
}

std::pair<std::string, std::uint16_t> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("--serve expects HOST:PORT");
  const int port = std::stoi(addr.substr(colon + 1));
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range");
  return {addr.substr(0, colon), static_cast<std::uint16_t>(port)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed indoor/outdoor robot fleet simulator"};
  app.require_subcommand(1);

  std::string scenario_path, serve_addr, map_path, log_path, out_dir, trajectory_log, frame;
  std::optional<std::uint64_t> seed;
  std::optional<double> time_cap;
  bool headless = false, live_script = false, no_raster = false;
  double realtime = 1.0, ppm = 10.0;

  auto* run = app.add_subcommand("run", "Run a scenario");
  run->add_option("scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--time-cap", time_cap, "Override the sim time cap (s)");
  run->add_option("--out", out_dir, "Artifact directory");
  run->add_flag("--no-raster", no_raster, "Skip map.ppm");
  auto* hl = run->add_flag("--headless", headless, "Run the operator script without a console (default)");
  auto* sv = run->add_option("--serve", serve_addr, "Serve the console websocket on HOST:PORT");
  hl->excludes(sv);
  run->add_flag("--script", live_script, "With --serve, also run the operator script");
  run->add_option("--realtime", realtime, "With --serve, sim seconds per wall second (0 = unthrottled)");

  auto* render = app.add_subcommand("render", "Render a map export to PPM");
  render->add_option("map", map_path, "Map file (map.bin)")->required()->check(CLI::ExistingFile);
  render->add_option("--trajectory", trajectory_log, "Mission log with pose records")->check(CLI::ExistingFile);
  render->add_option("--out", out_dir, "Output PPM path")->default_val("map.ppm");
  render->add_option("--ppm", ppm, "Pixels per meter");

  auto* replay = app.add_subcommand("replay", "Re-execute the commands of a mission log");
  replay->add_option("log", log_path, "mission.log")->required()->check(CLI::ExistingFile);
  replay->add_option("--scenario", scenario_path, "Scenario the log was produced from")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--out", out_dir, "Artifact directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const Scenario sc = load_scenario_file(scenario_path);
      RunOptions opt;
      opt.seed = seed;
      opt.time_cap = time_cap;
      if (!out_dir.empty()) opt.out_dir = out_dir;
      opt.raster = !no_raster;
      RunResult res;
      if (!serve_addr.empty()) {
        const auto [host, port] = split_addr(serve_addr);
        ConsoleGateway gw(host, port);
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cout << "console websocket on ws://" << host << ":" << gw.port() << "/" << std::endl;
        LiveOptions live;
        live.realtime_factor = realtime;
        live.run_script = live_script;
        live.stop = &g_stop;
        res = serve_scenario(sc, opt, gw, live);
        gw.stop();
      } else {
        res = run_scenario(sc, opt);
      }
      print_result(res);
      return static_cast<int>(res.status);
    }
    if (*render) {
      const auto contents = parse_map_file(read_file_bytes(map_path));
      std::vector<Trajectory> traj;
      if (!trajectory_log.empty()) traj = trajectories_from_log(read_lines(trajectory_log), contents.origin_frame);
      RenderStyle style;
      style.pixels_per_meter = ppm;
      const auto r = render_map(contents, traj, style);
      write_ppm(out_dir, r.image);
      std::cout << "wrote " << out_dir << " (" << r.image.width << "x" << r.image.height << ")\n";
      return 0;
    }
    if (*replay) {
      const Scenario sc = load_scenario_file(scenario_path);
      RunOptions opt;
      if (!out_dir.empty()) opt.out_dir = out_dir;
      const auto res = replay_log(sc, read_lines(log_path), opt);
      print_result(res);
      return static_cast<int>(res.status);
    }
  } catch (const ScenarioError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return static_cast<int>(RunStatus::invalid_scenario);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
