#include <filesystem>

#include "doctest.h"
#include "json.hpp"
#include "mdnx/geometry/eval.hpp"
#include "mdnx/geometry/image.hpp"
#include "support/geometry_oracles.hpp"

using namespace mdnx;
using namespace mdnx::geo;
namespace fs = std::filesystem;

namespace {

// Boxes spaced 10 m apart never overlap, so IoU is 1 on self and 0 otherwise.
Box3D box_at(int slot) {
  Box3D b;
  b.location = Vec3(slot * 10.0, 1.5, 20);
  b.h = 1.5;
  b.w = 1.6;
  b.l = 3.9;
  return b;
}

KittiObject car(int slot, double score = -1) {
  KittiObject o;
  o.type = "Car";
  o.bbox = {10, 10, 60, 80};
  o.box = box_at(slot);
  o.box.category = kCar;
  if (score >= 0) o.box.score = score;
  return o;
}

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("mdnx_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("hand-built PR curve yields 5/6") {
  ApImage img;
  img.ground_truth = {{box_at(0), true}, {box_at(1), true}};
  img.predictions = {{box_at(0), 0.9}, {box_at(5), 0.8}, {box_at(1), 0.7}};
  auto r = average_precision_40({img}, 0.5, iou_function(IouKind::k3d));
  CHECK(r.ap == 5.0 / 6);
  REQUIRE(r.curve.size() == 3);
  CHECK(r.curve[0].precision == 1);
  CHECK(r.curve[1].precision == 0.5);
  CHECK(r.curve[2].recall == 1);
  CHECK(r.ap == doctest::Approx(testing::exhaustive_ap40({img}, 0.5, iou_function(IouKind::k3d))).epsilon(1e-15));
}

TEST_CASE("perfect, empty and missing-gt cases") {
  ApImage img;
  img.ground_truth = {{box_at(0), true}, {box_at(1), true}, {box_at(2), true}};
  img.predictions = {{box_at(0), 0.3}, {box_at(1), 0.2}, {box_at(2), 0.9}};
  const auto fn = iou_function(IouKind::kBev);
  CHECK(average_precision_40({img}, 0.7, fn).ap == 1.0);

  ApImage none = img;
  none.predictions.clear();
  CHECK(average_precision_40({none}, 0.7, fn).ap == 0.0);

  ApImage no_gt;
  no_gt.predictions = img.predictions;
  auto r = average_precision_40({no_gt}, 0.7, fn);
  CHECK(r.ap == 0);
  CHECK(r.empty_ground_truth);
}

TEST_CASE("don't-care ground truth neither counts nor penalizes") {
  ApImage img;
  img.ground_truth = {{box_at(0), true}, {box_at(1), false}};
  img.predictions = {{box_at(1), 0.95}, {box_at(0), 0.5}};
  auto r = average_precision_40({img}, 0.5, iou_function(IouKind::k3d));
  CHECK(r.num_gt == 1);
  CHECK(r.false_positives == 0);
  CHECK(r.ap == 1.0);
}

TEST_CASE("a low-score false positive never raises AP") {
  Rng rng(5);
  const auto fn = iou_function(IouKind::kBev);
  for (int t = 0; t < 200; ++t) {
    std::vector<ApImage> images(1 + rng.below(4));
    double min_score = 1;
    for (auto& im : images) {
      const int n = static_cast<int>(rng.below(5));
      for (int k = 0; k < n; ++k) {
        im.ground_truth.push_back({box_at(k), rng.below(4) != 0});
        if (rng.below(3)) {
          const double s = rng.uniform(0.1, 1);
          im.predictions.push_back({box_at(k), s});
          min_score = std::min(min_score, s);
        }
      }
    }
    const double before = average_precision_40(images, 0.5, fn).ap;
    images[rng.below(images.size())].predictions.push_back({box_at(9), min_score / 2});
    CHECK(average_precision_40(images, 0.5, fn).ap <= before);
  }
}

TEST_CASE("AP matches the exhaustive oracle on random micro datasets") {
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    std::vector<ApImage> images(1 + rng.below(5));
    for (auto& im : images) {
      const int n = static_cast<int>(rng.below(7));
      for (int k = 0; k < n; ++k) {
        Box3D g = testing::random_box(rng, 4);
        im.ground_truth.push_back({g, rng.below(5) != 0});
        const int copies = static_cast<int>(rng.below(3));
        for (int c = 0; c < copies; ++c) {
          Box3D p = g;
          p.location += Vec3(rng.uniform(-0.6, 0.6), 0, rng.uniform(-0.6, 0.6));
          p.yaw += rng.uniform(-0.4, 0.4);
          im.predictions.push_back({p, rng.uniform(0, 1)});
        }
      }
      if (rng.below(2)) im.predictions.push_back({testing::random_box(rng, 4), rng.uniform(0, 1)});
    }
    for (double thr : {0.25, 0.5, 0.7})
      for (IouKind kind : {IouKind::k3d, IouKind::kBev}) {
        const auto fn = iou_function(kind);
        CHECK(std::abs(average_precision_40(images, thr, fn).ap - testing::exhaustive_ap40(images, thr, fn)) < 1e-9);
      }
  }
}

TEST_CASE("build_ap_images applies tier and neighbor classes") {
  Annotation gt;
  gt.objects = {car(0), car(1), car(2)};
  gt.objects[1].occlusion = 2;  // hard only
  gt.objects[2].type = "Van";
  gt.objects[2].box.category = -1;
  Annotation pred;
  pred.objects = {car(0, 0.9)};
  auto images = build_ap_images({gt}, {pred}, kCar, Difficulty::kModerate, DifficultyThresholds{});
  REQUIRE(images[0].ground_truth.size() == 3);
  CHECK(images[0].ground_truth[0].care);
  CHECK(!images[0].ground_truth[1].care);
  CHECK(!images[0].ground_truth[2].care);
  CHECK(images[0].predictions.size() == 1);
}

TEST_CASE("evaluate_dataset over label directories") {
  const auto gt_dir = fresh_dir("gt"), pred_dir = fresh_dir("pred"), empty_dir = fresh_dir("empty"),
             calib_dir = fresh_dir("calib"), out_dir = fresh_dir("report");
  Rng rng(3);
  for (int i = 0; i < 4; ++i) {
    Annotation a;
    for (int k = 0; k < 1 + i; ++k) a.objects.push_back(car(k));
    const std::string stem = "00000" + std::to_string(i);
    write_text_file(gt_dir / (stem + ".txt"), serialize_kitti_label(a));
    for (auto& o : a.objects) o.box.score = rng.uniform(0.5, 1);
    write_text_file(pred_dir / (stem + ".txt"), serialize_kitti_label(a));
    write_text_file(calib_dir / (stem + ".txt"), serialize_kitti_calib(make_pinhole(700, 600, 180, 1242, 375)));
  }
  EvalConfig cfg;
  cfg.iou_thresholds = {0.7, 0.5};
  auto copied = evaluate_dataset(pred_dir, gt_dir, calib_dir, cfg);
  CHECK(copied.images == 4);
  CHECK(copied.missing.empty());
  for (auto d : {Difficulty::kEasy, Difficulty::kModerate, Difficulty::kHard})
    for (auto m : {IouKind::k3d, IouKind::kBev}) CHECK(copied.find(kCar, d, m, 0.7).result.ap == 1.0);
  CHECK(copied.find(kPedestrian, Difficulty::kEasy, IouKind::k3d, 0.7).result.empty_ground_truth);

  auto empty = evaluate_dataset(empty_dir, gt_dir, fs::path(), cfg);
  CHECK(empty.missing.size() == 4);
  CHECK(empty.find(kCar, Difficulty::kModerate, IouKind::k3d, 0.5).result.ap == 0.0);
  cfg.skip_missing = true;
  CHECK(evaluate_dataset(empty_dir, gt_dir, fs::path(), cfg).images == 0);

  write_report(copied, out_dir);
  CHECK(fs::exists(out_dir / "report.tsv"));
  auto j = nlohmann::json::parse(read_text_file(out_dir / "report.json"));
  CHECK(j["results"].size() == copied.rows.size());
  auto img = read_image(out_dir / "pr_Car_moderate_3d_0.7.ppm");
  CHECK(img.width == 240);
  CHECK_THROWS_AS(evaluate_dataset(pred_dir, gt_dir, fs::path(), EvalConfig{}), ConfigError);
}

TEST_CASE("single image dataset agrees with direct AP") {
  const auto gt_dir = fresh_dir("gt1"), pred_dir = fresh_dir("pred1");
  Annotation gt, pred;
  gt.objects = {car(0), car(1), car(2)};
  pred.objects = {car(0, 0.9), car(7, 0.8), car(2, 0.6)};
  pred.objects[2].box.location.x() += 0.5;
  write_text_file(gt_dir / "a.txt", serialize_kitti_label(gt));
  write_text_file(pred_dir / "a.txt", serialize_kitti_label(pred));
  EvalConfig cfg;
  cfg.iou_thresholds = {0.5};
  auto rep = evaluate_dataset(pred_dir, gt_dir, fs::path(), cfg);
  auto direct = average_precision_40(build_ap_images({gt}, {pred}, kCar, Difficulty::kModerate, cfg.difficulty), 0.5,
                                     iou_function(IouKind::k3d));
  CHECK(rep.find(kCar, Difficulty::kModerate, IouKind::k3d, 0.5).result.ap == direct.ap);
}

TEST_CASE("PPM and PNG round trip") {
  Image img(7, 5, {1, 2, 3});
  img.set(3, 2, {200, 100, 50});
  const auto dir = fresh_dir("img");
  write_ppm(img, dir / "a.ppm");
  write_png(img, dir / "a.png");
  for (auto p : {dir / "a.ppm", dir / "a.png"}) {
    auto back = read_image(p);
    CHECK(back.width == 7);
    CHECK(back.rgb == img.rgb);
  }
  auto t = image_to_tensor(img);
  CHECK(t.shape() == Shape{3, 5, 7});
  CHECK(t[2 * 35 + 2 * 7 + 3] == doctest::Approx(50.0 / 255));
}
