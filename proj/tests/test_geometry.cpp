#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mdnx/geometry/box.hpp"
#include "mdnx/geometry/kitti.hpp"
#include "support/geometry_oracles.hpp"

using namespace mdnx;
using namespace mdnx::geo;
using mdnx::testing::random_box;

TEST_CASE("label line maps fields in devkit order") {
  auto ann = parse_kitti_label("Car 0.0 0 -1.57 100 100 200 200 1.5 1.6 3.9 1.0 1.5 10.0 -1.47\n");
  REQUIRE(ann.objects.size() == 1);
  const auto& o = ann.objects[0];
  CHECK(o.type == "Car");
  CHECK(o.box.category == kCar);
  CHECK(o.alpha == -1.57);
  CHECK(o.bbox.x_min == 100);
  CHECK(o.bbox.y_max == 200);
  CHECK(o.box.h == 1.5);
  CHECK(o.box.w == 1.6);
  CHECK(o.box.l == 3.9);
  CHECK(o.box.location.x() == 1.0);
  CHECK(o.box.location.z() == 10.0);
  CHECK(o.box.yaw == -1.47);
  CHECK(!o.box.score);
  CHECK(!o.unknown_type);
}

TEST_CASE("label parsing edge cases") {
  CHECK(parse_kitti_label("").objects.empty());
  CHECK(parse_kitti_label("\n  \n").objects.empty());
  auto scored = parse_kitti_label("Pedestrian 0 1 0 1 2 3 4 1.7 0.6 0.8 0 1.6 5 0 0.75");
  CHECK(*scored.objects[0].box.score == 0.75);
  auto odd = parse_kitti_label("Robot 0 0 0 1 2 3 4 1 1 1 0 0 5 0");
  CHECK(odd.objects[0].unknown_type);
  CHECK(odd.objects[0].box.category == -1);
  auto van = parse_kitti_label("Van 0 0 0 1 2 3 4 1 1 1 0 0 5 0");
  CHECK(!van.objects[0].unknown_type);
  CHECK(van.objects[0].box.category == -1);
}

TEST_CASE("label parse errors carry the line number") {
  try {
    parse_kitti_label("Car 0 0 0 1 2 3 4 1 1 1 0 0 5 0\nCar 0 0\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    parse_kitti_label("Car 0 0 0 1 2 3 4 1 1 1 0 zero 5 0");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("zero") != std::string::npos);
  }
}

TEST_CASE("label serialization round-trips generated lines") {
  Rng rng(31);
  const char* types[] = {"Car", "Pedestrian", "Cyclist", "Van", "DontCare", "Gizmo"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const int n = static_cast<int>(rng.below(5));
    for (int i = 0; i < n; ++i) {
      text += types[rng.below(6)];
      // Values are generated directly in canonical shortest form.
      std::vector<double> v = {rng.uniform(0, 1), double(rng.below(4)), rng.uniform(-3, 3)};
      for (int k = 0; k < 4; ++k) v.push_back(std::round(rng.uniform(0, 1000) * 100) / 100);
      for (int k = 0; k < 6; ++k) v.push_back(rng.uniform(-50, 50));
      v.push_back(rng.uniform(-3.14, 3.14));
      if (rng.below(2)) v.push_back(rng.uniform(0, 1));
      for (double x : v) text += ' ' + format_number(x);
      text += '\n';
    }
    CHECK(serialize_kitti_label(parse_kitti_label(text)) == text);
  }
  // Non-canonical spellings normalize to the shortest form.
  CHECK(serialize_kitti_label(parse_kitti_label("Car 0.00 0 -1.570 100.0 100 200 200 1.5 1.6 3.9 1.0 1.5 10.0 -1.47")) ==
        "Car 0 0 -1.57 100 100 200 200 1.5 1.6 3.9 1 1.5 10 -1.47\n");
}

TEST_CASE("calib parsing") {
  auto c = parse_kitti_calib("P0: 1 0 0 0 0 1 0 0 0 0 1 0\nP2: 700 0 600 0 0 700 180 0 0 0 1 0\n");
  CHECK(c.fx() == 700);
  CHECK(c.fy() == 700);
  CHECK(c.cx() == 600);
  CHECK(c.cy() == 180);
  CHECK_THROWS_AS(parse_kitti_calib("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n"), ParseError);
  try {
    parse_kitti_calib("P2: 700 0 6o0 0 0 700 180 0 0 0 1 0\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("6o0") != std::string::npos);
  }
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    CameraCalib k;
    for (int i = 0; i < 12; ++i) k.P(i / 4, i % 4) = rng.uniform(-1000, 1000);
    k.P(0, 0) = rng.uniform(100, 1000);
    k.P(1, 1) = rng.uniform(100, 1000);
    auto back = parse_kitti_calib(serialize_kitti_calib(k));
    CHECK(back.P == k.P);
  }
}

TEST_CASE("project_center") {
  auto calib = make_pinhole(700, 600, 180, 1242, 375);
  Box3D b;
  b.location = Vec3(0, 0, 12);
  auto p = project_center(b, calib);
  CHECK(p.x() == 600);
  CHECK(p.y() == 180);

  b.location = Vec3(2, 1, 10);
  auto near = project_center(b, calib);
  b.location.z() = 20;
  auto far = project_center(b, calib);
  CHECK(std::abs((far.x() - 600) * 2 - (near.x() - 600)) < 1e-9);
  CHECK(std::abs((far.y() - 180) * 2 - (near.y() - 180)) < 1e-9);

  b.location.z() = 0;
  CHECK_THROWS_AS(project_center(b, calib), ProjectionError);

  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    CameraCalib k;
    for (int i = 0; i < 12; ++i) k.P(i / 4, i % 4) = rng.uniform(-5, 5);
    k.P(0, 0) = rng.uniform(100, 900);
    k.P(1, 1) = rng.uniform(100, 900);
    k.P(2, 0) = k.P(2, 1) = 0;
    k.P(2, 2) = 1;
    k.P(2, 3) = rng.uniform(0, 0.01);
    Box3D r = random_box(rng);
    const double x = r.location.x(), y = r.location.y(), z = r.location.z();
    double h[3];
    for (int i = 0; i < 3; ++i) h[i] = k.P(i, 0) * x + k.P(i, 1) * y + k.P(i, 2) * z + k.P(i, 3);
    auto q = project_center(r, k);
    CHECK(std::abs(q.x() - h[0] / h[2]) < 1e-9);
    CHECK(std::abs(q.y() - h[1] / h[2]) < 1e-9);
  }
}

TEST_CASE("box corners") {
  Box3D unit;
  unit.location = Vec3(0, 0.5, 5);
  auto c = box3d_corners(unit);
  for (const auto& p : c) {
    CHECK(std::abs(std::abs(p.x()) - 0.5) < 1e-12);
    CHECK(std::abs(std::abs(p.z() - 5) - 0.5) < 1e-12);
    CHECK((std::abs(p.y() - 0.5) < 1e-12 || std::abs(p.y() + 0.5) < 1e-12));
  }
  for (int i = 0; i < 4; ++i) CHECK(c[i].y() == 0.5);

  Box3D car;
  car.location = Vec3(0, 0, 10);
  car.w = 1.6;
  car.l = 3.9;
  auto extent = [](const Box3D& b) {
    double xs = 0, zs = 0;
    for (const auto& p : box3d_corners(b)) {
      xs = std::max(xs, std::abs(p.x() - b.location.x()));
      zs = std::max(zs, std::abs(p.z() - b.location.z()));
    }
    return std::pair{xs, zs};
  };
  auto [x0, z0] = extent(car);
  CHECK(x0 == doctest::Approx(1.95));
  CHECK(z0 == doctest::Approx(0.8));
  car.yaw = std::numbers::pi / 2;
  auto [x1, z1] = extent(car);
  CHECK(x1 == doctest::Approx(0.8));
  CHECK(z1 == doctest::Approx(1.95));
}

TEST_CASE("corner distance matrix is yaw invariant") {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    Box3D b = random_box(rng);
    Box3D r = b;
    r.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
    auto ca = box3d_corners(b), cb = box3d_corners(r);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) CHECK(std::abs((ca[i] - ca[j]).norm() - (cb[i] - cb[j]).norm()) < 1e-9);
  }
}

TEST_CASE("bev and 3d IoU closed forms") {
  Box3D a;
  a.location = Vec3(0, 1, 10);
  a.yaw = 0.7;
  CHECK(bev_iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(iou_3d(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Box3D far = a;
  far.location.x() += 10;
  CHECK(bev_iou(a, far) == 0);
  CHECK(iou_3d(a, far) == 0);

  Box3D sq1, sq2;
  sq1.location = Vec3(0, 0, 10);
  sq2.location = Vec3(0.5, 0, 10);
  CHECK(bev_iou(sq1, sq2) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Box3D up = a;
  up.location.y() -= a.h;
  CHECK(iou_3d(a, up) == 0);
  Box3D half = a;
  half.location.y() -= a.h / 2;
  CHECK(iou_3d(a, half) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("IoU matches Monte-Carlo sampling") {
  Rng rng(2024);
  Rng sampler(99);
  for (int t = 0; t < 20; ++t) {
    Box3D a = random_box(rng), b = random_box(rng);
    auto bev = mdnx::testing::monte_carlo_iou(a, b, false, 200000, sampler);
    auto vol = mdnx::testing::monte_carlo_iou(a, b, true, 200000, sampler);
    CHECK(std::abs(bev_iou(a, b) - bev.iou) < 1e-2);
    CHECK(std::abs(iou_3d(a, b) - vol.iou) < 1e-2);
    // Clipped area agrees with the sampled area within 3 sigma (plus a hair
    // for the zero-intersection case where sigma vanishes).
    CHECK(std::abs(bev_intersection(a, b) - bev.intersection) <= 3 * bev.intersection_stderr + 1e-12);
  }
}

TEST_CASE("IoU symmetry, range and yaw invariance") {
  Rng rng(77);
  for (int t = 0; t < 1000; ++t) {
    Box3D a = random_box(rng), b = random_box(rng);
    const double ab = bev_iou(a, b), ba = bev_iou(b, a);
    const double a3 = iou_3d(a, b), b3 = iou_3d(b, a);
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(std::abs(a3 - b3) <= 1e-12);
    CHECK((ab >= 0 && ab <= 1 && a3 >= 0 && a3 <= 1));
    CHECK(std::abs(bev_iou(a, a) - 1) < 1e-12);

    const double theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Vec3 pivot(rng.uniform(-5, 5), 0, rng.uniform(5, 15));
    auto rotate = [&](Box3D box) {
      const Vec3 d = box.location - pivot;
      const double c = std::cos(theta), s = std::sin(theta);
      box.location = pivot + Vec3(c * d.x() + s * d.z(), d.y(), -s * d.x() + c * d.z());
      box.yaw += theta;
      return box;
    };
    CHECK(std::abs(bev_iou(rotate(a), rotate(b)) - ab) < 1e-9);
  }
}

TEST_CASE("clip polygon of nested and disjoint squares") {
  Polygon big = {{0, 0}, {4, 0}, {4, 4}, {0, 4}};
  Polygon small = {{1, 1}, {2, 1}, {2, 2}, {1, 2}};
  CHECK(polygon_area(clip_polygon(small, big)) == doctest::Approx(1));
  CHECK(polygon_area(clip_polygon(big, small)) == doctest::Approx(1));
  Polygon away = {{10, 10}, {11, 10}, {11, 11}, {10, 11}};
  CHECK(clip_polygon(away, big).empty());
}

TEST_CASE("alpha and yaw conversions invert each other") {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    Box3D b = random_box(rng, 8);
    const double a = alpha_from_yaw(b.yaw, b.location);
    CHECK(std::abs(wrap_angle(yaw_from_alpha(a, b.location) - b.yaw)) < 1e-12);
    CHECK(a > -std::numbers::pi);
    CHECK(a <= std::numbers::pi);
  }
  CHECK(wrap_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("difficulty tiers nest and scale with image height") {
  KittiObject o;
  o.bbox = {0, 0, 10, 50};
  DifficultyThresholds t;
  CHECK(difficulty_of(o, t) == 0);
  o.occlusion = 1;
  CHECK(difficulty_of(o, t) == 1);
  o.truncation = 0.4;
  CHECK(difficulty_of(o, t) == 2);
  o.truncation = 0.9;
  CHECK(difficulty_of(o, t) == -1);
  auto s = DifficultyThresholds::for_image_height(75);
  CHECK(s.min_height[0] == doctest::Approx(8));
  CHECK(s.min_height[1] == doctest::Approx(5));
}

TEST_CASE("project_box contains the projected center") {
  auto calib = make_pinhole(192, 64, 45, 128, 128);
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    Box3D b = random_box(rng);
    auto bb = project_box(b, calib);
    REQUIRE(bb);
    CHECK(bb->valid());
    CHECK(bb->xc >= bb->x_min - 1e-9);
    CHECK(bb->yc <= bb->y_max + 1e-9);
  }
}
