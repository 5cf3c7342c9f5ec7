#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "fleetsim/sensors.hpp"

using namespace fleetsim;

namespace {

WorldModel open_field() {
  WorldModel w;
  w.bounds = {{-50, -50}, {50, 50}};
  return w;
}

// Reference values from tests/oracles/closed_form.py.
constexpr double kGrayAt4m = 115.0;
constexpr double kGrayAt3m = 173.33333333333334;
constexpr double kGrayTwoLights = 163.0;

}  // namespace

TEST_CASE("open field lidar returns only misses at max range") {
  Rng rng(1);
  LidarSpec spec;
  const auto scan = simulate_lidar(open_field(), {1, 2, 0.3}, spec, rng);
  REQUIRE(scan.beams.size() == static_cast<std::size_t>(spec.beam_count));
  for (const auto& b : scan.beams) {
    CHECK_FALSE(b.hit);
    CHECK(b.range == spec.max_range);
  }
  CHECK(scan.hit_count() == 0);
}

TEST_CASE("beam normal to a wall reads the wall distance") {
  WorldModel w = open_field();
  w.segments.push_back({{-10, 3}, {10, 3}, 0.0, true});
  LidarSpec spec;
  spec.beam_count = 4;
  spec.range_noise_sigma = 0.0;
  Rng rng(1);
  // beam 2 of 4 sits at +pi/4 from the heading; aim it along +y
  const auto scan = simulate_lidar(w, {0, 0, M_PI / 4}, spec, rng);
  REQUIRE(scan.beams[2].hit);
  CHECK(scan.beams[2].range == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("noise-free lidar equals raycast beam by beam") {
  WorldModel w = open_field();
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(-15, 15);
  for (int i = 0; i < 30; ++i) w.segments.push_back({{u(g), u(g)}, {u(g), u(g)}, 0.0, true});
  LidarSpec spec;
  spec.range_noise_sigma = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Pose2D pose(u(g), u(g), u(g));
    Rng rng(k);
    const auto scan = simulate_lidar(w, pose, spec, rng);
    for (int i = 0; i < spec.beam_count; ++i) {
      const double a = pose.theta + spec.beam_angle(i);
      const auto h = w.raycast(pose.translation(), {std::cos(a), std::sin(a)}, spec.max_range);
      REQUIRE(scan.beams[i].hit == h.has_value());
      if (h) {
        REQUIRE(scan.beams[i].range == h->distance);
      }
    }
  }
}

TEST_CASE("equal generator states give identical scans") {
  WorldModel w = open_field();
  w.segments.push_back({{-5, 4}, {6, 4}, 0.0, true});
  w.segments.push_back({{5, -5}, {5, 5}, 0.0, true});
  LidarSpec spec;
  Rng a(42), b(42);
  const auto s1 = simulate_lidar(w, {0, 0, 0.1}, spec, a);
  const auto s2 = simulate_lidar(w, {0, 0, 0.1}, spec, b);
  for (std::size_t i = 0; i < s1.beams.size(); ++i) {
    CHECK(s1.beams[i].range == s2.beams[i].range);
    CHECK(s1.beams[i].hit == s2.beams[i].hit);
  }
}

TEST_CASE("scan ranges stay in (0, max_range]") {
  WorldModel w = open_field();
  w.segments.push_back({{0.005, -1}, {0.005, 1}, 0.0, true});
  LidarSpec spec;
  spec.range_noise_sigma = 0.05;
  Rng rng(3);
  const auto scan = simulate_lidar(w, {0, 0, 0}, spec, rng);
  for (const auto& b : scan.beams) {
    CHECK(b.range > 0.0);
    CHECK(b.range <= spec.max_range);
  }
}

TEST_CASE("beam layout is centred on the heading") {
  LidarSpec spec;
  spec.beam_count = 4;
  spec.fov = M_PI;
  CHECK(spec.beam_angle(0) == doctest::Approx(-3 * M_PI / 8));
  CHECK(spec.beam_angle(3) == doctest::Approx(3 * M_PI / 8));
  spec.beam_count = 1;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("camera reading follows the inverse-square forward model") {
  WorldModel w = open_field();
  const CameraSpec cam;
  CHECK(simulate_camera_intensity(w, {}, cam).mean_gray == cam.ambient_level);

  w.lights.push_back({{4, 0}, 1.0, true});
  CHECK(simulate_camera_intensity(w, {}, cam).mean_gray == kGrayAt4m);
  w.lights[0].position = {3, 0};
  CHECK(simulate_camera_intensity(w, {}, cam).mean_gray == doctest::Approx(kGrayAt3m).epsilon(1e-12));
  w.lights[0].position = {4, 0};
  w.lights.push_back({{5, 0}, 1.0, true});
  CHECK(simulate_camera_intensity(w, {}, cam).mean_gray == doctest::Approx(kGrayTwoLights).epsilon(1e-12));
}

TEST_CASE("occluded, disabled, out-of-cone and out-of-range lights contribute nothing") {
  const CameraSpec cam;
  WorldModel w = open_field();
  w.lights.push_back({{4, 0}, 1.0, true});
  w.segments.push_back({{2, -1}, {2, 1}, 0.0, true});
  CHECK(simulate_camera_intensity(w, {}, cam).mean_gray == 40.0);

  WorldModel glass = open_field();
  glass.lights.push_back({{4, 0}, 1.0, true});
  glass.segments.push_back({{2, -1}, {2, 1}, 3.0, false});
  CHECK(simulate_camera_intensity(glass, {}, cam).mean_gray == kGrayAt4m);

  WorldModel off = open_field();
  off.lights.push_back({{4, 0}, 1.0, false});
  CHECK(simulate_camera_intensity(off, {}, cam).mean_gray == 40.0);

  WorldModel side = open_field();
  side.lights.push_back({{4, 1.0}, 1.0, true});
  CHECK(simulate_camera_intensity(side, {}, cam).mean_gray == 40.0);

  WorldModel far = open_field();
  far.lights.push_back({{10.5, 0}, 1.0, true});
  CHECK(simulate_camera_intensity(far, {}, cam).mean_gray == 40.0);
}

TEST_CASE("camera reading saturates at 255") {
  WorldModel w = open_field();
  w.lights.push_back({{0.2, 0}, 1.0, true});
  CHECK(simulate_camera_intensity(w, {}, CameraSpec{}).mean_gray == 255.0);
}

TEST_CASE("mean gray is non-increasing in light distance") {
  const CameraSpec cam;
  double prev = 256.0;
  for (int k = 1; k <= 120; ++k) {
    WorldModel w = open_field();
    w.lights.push_back({{k * 0.1, 0.0}, 1.0, true});
    const double g = simulate_camera_intensity(w, {}, cam).mean_gray;
    CHECK(g <= prev);
    prev = g;
  }
}

TEST_CASE("adding a visible light never decreases mean gray") {
  const CameraSpec cam;
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> ud(0.3, 12.0), ua(-0.12, 0.12), up(0.1, 3.0);
  for (int trial = 0; trial < 500; ++trial) {
    WorldModel w = open_field();
    for (int i = 0; i < 3; ++i) {
      const double d = ud(g), a = ua(g);
      w.lights.push_back({{d * std::cos(a), d * std::sin(a)}, up(g), true});
    }
    const double before = simulate_camera_intensity(w, {}, cam).mean_gray;
    const double d = ud(g), a = ua(g);
    w.lights.push_back({{d * std::cos(a), d * std::sin(a)}, up(g), true});
    CHECK(simulate_camera_intensity(w, {}, cam).mean_gray >= before);
  }
}

TEST_CASE("crop_scan keeps the central beams") {
  Scan s;
  LidarSpec spec;
  spec.beam_count = 8;
  for (int i = 0; i < 8; ++i) s.beams.push_back({spec.beam_angle(i), 1.0 + i, true});
  s.fov = spec.fov;
  const auto c = crop_scan(s, M_PI / 2);
  CHECK(c.beams.size() == 4);
  for (const auto& b : c.beams) CHECK(std::fabs(b.angle) <= M_PI / 2);
  CHECK(c.fov == doctest::Approx(M_PI));
}
