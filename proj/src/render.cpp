#include <cmath>
#include <fstream>

#include "fleetsim/station.hpp"

namespace fleetsim {

std::vector<Trajectory> trajectories_from_log(const std::vector<std::string>& log_lines, const std::string& frame) {
  std::vector<Trajectory> out;
  for (const auto& line : log_lines) {
    const auto j = nlohmann::json::parse(line);
    if (j.at("kind") != "pose") continue;
    const auto& p = j.at("payload");
    if (p.value("frame", "") != frame) continue;
    const auto id = p.at("robot").get<std::string>();
    auto it = std::find_if(out.begin(), out.end(), [&](const Trajectory& t) { return t.robot == id; });
    if (it == out.end()) {
      out.push_back({id, {}});
      it = out.end() - 1;
    }
    const auto& e = p.at("estimate");
    it->points.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
  }
  return out;
}

Vec2 RenderedMap::pixel_center(int px, int py) const {
  return {extent.min.x + (px + 0.5) / pixels_per_meter, extent.max.y - (py + 0.5) / pixels_per_meter};
}

RenderedMap render_map(const MapFileContents& map, const std::vector<Trajectory>& trajectories,
                       const RenderStyle& style) {
  if (!(style.pixels_per_meter > 0.0)) throw std::invalid_argument("pixels_per_meter must be positive");
  RenderedMap out;
  out.pixels_per_meter = style.pixels_per_meter;
  if (style.extent) {
    out.extent = *style.extent;
  } else if (map.records.empty()) {
    out.extent = {{0.0, 0.0}, {10.0, 10.0}};
  } else {
    Vec2 lo{INFINITY, INFINITY}, hi{-INFINITY, -INFINITY};
    for (const auto& r : map.records) {
      lo = {std::min(lo.x, static_cast<double>(r.x)), std::min(lo.y, static_cast<double>(r.y))};
      hi = {std::max(hi.x, static_cast<double>(r.x)), std::max(hi.y, static_cast<double>(r.y))};
    }
    out.extent = {{lo.x - style.margin, lo.y - style.margin}, {hi.x + style.margin, hi.y + style.margin}};
  }
  auto& img = out.image;
  img.width = std::max(1, static_cast<int>(std::ceil((out.extent.max.x - out.extent.min.x) * style.pixels_per_meter)));
  img.height = std::max(1, static_cast<int>(std::ceil((out.extent.max.y - out.extent.min.y) * style.pixels_per_meter)));
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, style.background);

  auto plot = [&](Vec2 p, Rgb c) {
    const int px = static_cast<int>(std::floor((p.x - out.extent.min.x) * style.pixels_per_meter));
    const int py = static_cast<int>(std::floor((out.extent.max.y - p.y) * style.pixels_per_meter));
    if (px < 0 || py < 0 || px >= img.width || py >= img.height) return;
    img.pixels[static_cast<std::size_t>(py) * img.width + px] = c;
  };

  for (const auto& t : trajectories) {
    const Rgb c = t.robot == "hd2" ? style.hd2_path : t.robot == "warthog" ? style.warthog_path : style.other_path;
    for (std::size_t i = 1; i < t.points.size(); ++i) {
      const Vec2 a = t.points[i - 1], b = t.points[i];
      const int n = std::max(1, static_cast<int>(std::ceil(distance(a, b) * style.pixels_per_meter * 2.0)));
      for (int k = 0; k <= n; ++k) plot(a + (b - a) * (static_cast<double>(k) / n), c);
    }
  }
  // Unannotated points first so annotation colours stay on top; then levels in
  // increasing severity.
  for (const auto& r : map.records)
    if (r.level == 0) plot({r.x, r.y}, style.point);
  for (std::uint8_t level = 1; level <= 3; ++level)
    for (const auto& r : map.records)
      if (r.level == level) plot({r.x, r.y}, level == 1 ? style.yellow : level == 2 ? style.orange : style.red);
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  for (const auto& p : image.pixels) {
    const char px[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
    out.write(px, 3);
  }
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  Image img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P6" || maxval != 255 || img.width <= 0 || img.height <= 0) throw std::runtime_error("not a P6 image");
  in.get();
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (auto& p : img.pixels) {
    char px[3];
    if (!in.read(px, 3)) throw std::runtime_error("truncated image");
    p = {static_cast<std::uint8_t>(px[0]), static_cast<std::uint8_t>(px[1]), static_cast<std::uint8_t>(px[2])};
  }
  return img;
}

}  // namespace fleetsim
