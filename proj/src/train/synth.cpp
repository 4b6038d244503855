#include "mdnx/train/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mdnx/core/rng.hpp"

namespace mdnx {

namespace {

// Faces as corner indices (see geo::box3d_corners): heading face first.
constexpr int kFaces[6][4] = {{0, 1, 5, 4}, {2, 3, 7, 6}, {1, 2, 6, 5}, {3, 0, 4, 7}, {4, 5, 6, 7}, {0, 1, 2, 3}};
enum FaceKind { kFront, kBack, kSide, kTop };
constexpr FaceKind kFaceKinds[6] = {kFront, kBack, kSide, kSide, kTop, kTop};

geo::Rgb base_color(int category) {
  switch (category) {
    case geo::kPedestrian:
      return {210, 70, 60};
    case geo::kCyclist:
      return {60, 180, 80};
    default:
      return {60, 100, 210};
  }
}

constexpr geo::Rgb kFrontTint = {240, 220, 80};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

bool inside_convex(const std::array<geo::Vec2, 4>& poly, double x, double y) {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const geo::Vec2& a = poly[static_cast<std::size_t>(i)];
    const geo::Vec2& b = poly[static_cast<std::size_t>((i + 1) % 4)];
    const double cross = (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
    const int s = cross > 0 ? 1 : (cross < 0 ? -1 : 0);
    if (s == 0) continue;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

}  // namespace

void SynthConfig::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("data.width and data.height must be positive");
  if (focal_scale <= 0) throw ConfigError("synth focal scale must be positive");
  if (min_objects < 0 || max_objects < min_objects) throw ConfigError("data.min_objects and data.max_objects must satisfy 0 <= min <= max");
  if (!(depth_min > 0 && depth_max > depth_min)) throw ConfigError("data.depth_min and data.depth_max must satisfy 0 < min < max");
  if (categories.empty()) throw ConfigError("data.categories must name at least one category");
  for (int c : categories)
    if (c < 0 || c >= geo::kNumCategories) throw ConfigError("synth category out of range: " + std::to_string(c));
  if (max_tries < 1) throw ConfigError("synth max_tries must be at least 1");
}

DimRange dim_range(int category) {
  switch (category) {
    case geo::kPedestrian:
      return {{1.6, 1.9}, {0.5, 0.7}, {0.6, 1.0}};
    case geo::kCyclist:
      return {{1.6, 1.9}, {0.5, 0.7}, {1.5, 1.9}};
    default:
      return {{1.4, 1.7}, {1.5, 1.9}, {3.5, 4.5}};
  }
}

SyntheticScene synth_scene(std::uint64_t seed, const SynthConfig& cfg) {
  cfg.validate();
  SyntheticScene scene;
  scene.seed = seed;
  const double f = cfg.focal_scale * cfg.width;
  const double cx = cfg.width / 2.0, cy = cfg.height / 2.0;
  scene.calib = geo::make_pinhole(f, cx, cy, cfg.width, cfg.height);
  Rng rng(seed);

  std::vector<geo::Box3D> boxes;
  const int count = cfg.min_objects + static_cast<int>(rng.below(cfg.max_objects - cfg.min_objects + 1));
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
      geo::Box3D b;
      b.category = cfg.categories[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(cfg.categories.size())))];
      const DimRange r = dim_range(b.category);
      b.h = rng.uniform(r.h[0], r.h[1]);
      b.w = rng.uniform(r.w[0], r.w[1]);
      b.l = rng.uniform(r.l[0], r.l[1]);
      const double z = rng.uniform(cfg.depth_min, cfg.depth_max);
      const double u = rng.uniform(0, cfg.width);
      b.location = geo::Vec3((u - cx) * z / f, cfg.camera_height, z);
      b.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
      if (!geo::project_box(b, scene.calib)) continue;
      const bool overlaps = std::any_of(boxes.begin(), boxes.end(),
                                        [&](const geo::Box3D& o) { return geo::bev_intersection(o, b) > 0; });
      if (overlaps) continue;
      boxes.push_back(b);
      break;
    }
  }

  // Background: sky above the horizon, darkening ground below, seeded noise.
  geo::Image img(cfg.width, cfg.height);
  Rng noise(seed ^ 0x9e3779b97f4a7c15ULL);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      const double n = noise.uniform(-6, 6);
      if (y + 0.5 < cy) {
        img.set(x, y, {to_byte(150 + n), to_byte(175 + n), to_byte(200 + n)});
      } else {
        const double t = (y + 0.5 - cy) / (cfg.height - cy);
        const double g = 70 + 50 * t + n;
        img.set(x, y, {to_byte(g), to_byte(g), to_byte(g)});
      }
    }

  // Painter's order: far to near.
  std::vector<std::size_t> order(boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].location.z() > boxes[b].location.z(); });
  std::vector<int> ids(static_cast<std::size_t>(cfg.width * cfg.height), -1);
  std::vector<int> silhouette(boxes.size(), 0);
  for (std::size_t idx : order) {
    const geo::Box3D& b = boxes[idx];
    const auto corners = geo::box3d_corners(b);
    const geo::Vec3 center = b.gravity_center();
    const double bright =
        std::clamp(1 - 0.7 * (b.location.z() - cfg.depth_min) / (cfg.depth_max - cfg.depth_min), 0.3, 1.0);
    for (int fi = 0; fi < 6; ++fi) {
      geo::Vec3 fc = geo::Vec3::Zero();
      for (int k : kFaces[fi]) fc += corners[static_cast<std::size_t>(k)];
      fc /= 4;
      if ((fc - center).dot(fc) >= 0) continue;  // faces away from the camera
      std::array<geo::Vec2, 4> poly;
      double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
      for (int k = 0; k < 4; ++k) {
        poly[static_cast<std::size_t>(k)] = geo::project_point(corners[static_cast<std::size_t>(kFaces[fi][k])], scene.calib);
        x0 = std::min(x0, poly[static_cast<std::size_t>(k)].x());
        x1 = std::max(x1, poly[static_cast<std::size_t>(k)].x());
        y0 = std::min(y0, poly[static_cast<std::size_t>(k)].y());
        y1 = std::max(y1, poly[static_cast<std::size_t>(k)].y());
      }
      const FaceKind kind = kFaceKinds[fi];
      const geo::Rgb base = kind == kFront ? kFrontTint : base_color(b.category);
      const double shade = kind == kTop ? 1.0 : kind == kSide ? 0.8 : kind == kBack ? 0.6 : 1.0;
      const geo::Rgb color = {to_byte(base[0] * shade * bright), to_byte(base[1] * shade * bright),
                              to_byte(base[2] * shade * bright)};
      const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
      const int px1 = std::min(cfg.width - 1, static_cast<int>(std::ceil(x1)));
      const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
      const int py1 = std::min(cfg.height - 1, static_cast<int>(std::ceil(y1)));
      for (int y = py0; y <= py1; ++y)
        for (int x = px0; x <= px1; ++x) {
          if (!inside_convex(poly, x + 0.5, y + 0.5)) continue;
          int& id = ids[static_cast<std::size_t>(y * cfg.width + x)];
          if (id != static_cast<int>(idx)) ++silhouette[idx];
          id = static_cast<int>(idx);
          img.set(x, y, color);
        }
    }
  }
  std::vector<int> visible(boxes.size(), 0);
  for (int id : ids)
    if (id >= 0) ++visible[static_cast<std::size_t>(id)];

  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const geo::Box3D& b = boxes[i];
    geo::KittiObject obj;
    obj.type = geo::category_name(b.category);
    obj.box = b;
    obj.alpha = geo::alpha_from_yaw(b.yaw, b.location);
    obj.bbox = *geo::project_box(b, scene.calib);
    double ux0 = 1e300, ux1 = -1e300, uy0 = 1e300, uy1 = -1e300;
    for (const auto& c : geo::box3d_corners(b)) {
      const geo::Vec2 p = geo::project_point(c, scene.calib);
      ux0 = std::min(ux0, p.x());
      ux1 = std::max(ux1, p.x());
      uy0 = std::min(uy0, p.y());
      uy1 = std::max(uy1, p.y());
    }
    const double full = (ux1 - ux0) * (uy1 - uy0);
    const double kept = std::max(0.0, std::min(ux1, double(cfg.width)) - std::max(ux0, 0.0)) *
                        std::max(0.0, std::min(uy1, double(cfg.height)) - std::max(uy0, 0.0));
    obj.truncation = full > 0 ? std::clamp(1 - kept / full, 0.0, 1.0) : 0.0;
    const double occluded = silhouette[i] > 0 ? 1 - static_cast<double>(visible[i]) / silhouette[i] : 0.0;
    obj.occlusion = occluded < 0.15 ? 0 : (occluded < 0.5 ? 1 : 2);
    scene.annotation.objects.push_back(obj);
  }
  scene.image = std::move(img);
  return scene;
}

}  // namespace mdnx
