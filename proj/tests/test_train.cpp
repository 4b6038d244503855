#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "mdnx/core/checkpoint.hpp"
#include "mdnx/train/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/matching_oracle.hpp"

using namespace mdnx;
using mdnx::testing::brute_force_cost;
using mdnx::testing::grad_check;
using mdnx::testing::random_tensor;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mdnx_test_train_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelConfig tiny_config() {
  ModelConfig c = toy_model_config();
  c.classes = 1;
  c.queries = 8;
  c.decoder_layers = 2;
  return c;
}

SynthConfig small_scenes() {
  SynthConfig s;
  s.width = 64;
  s.height = 64;
  s.max_objects = 3;
  return s;
}

/// One-query predictions with chosen raw values.
Predictions single_prediction(const std::array<double, 6>& box6, double depth, double log_sigma,
                              const std::array<double, 3>& dims, double sin_a, double cos_a, double logit) {
  Predictions p;
  p.logits = Tensor::from_data({1, 1, 1}, {static_cast<Real>(logit)});
  p.box6 = Tensor::from_data({1, 1, 6}, std::vector<Real>(box6.begin(), box6.end()));
  p.depth = Tensor::from_data({1, 1}, {static_cast<Real>(depth)});
  p.log_sigma = Tensor::from_data({1, 1}, {static_cast<Real>(log_sigma)});
  p.dims = Tensor::from_data({1, 1, 3}, std::vector<Real>(dims.begin(), dims.end()));
  p.angle = Tensor::from_data({1, 1, 2}, {static_cast<Real>(sin_a), static_cast<Real>(cos_a)});
  return p;
}

}  // namespace

// ---------------------------------------------------------------- matching

TEST_CASE("hungarian: hand example") {
  Eigen::MatrixXd c(3, 3);
  c << 4, 1, 3, 2, 0, 5, 3, 2, 2;
  const MatchResult r = hungarian_match(c);
  REQUIRE(r.pairs.size() == 3);
  CHECK(r.pairs[0] == std::pair<Index, Index>{0, 1});
  CHECK(r.pairs[1] == std::pair<Index, Index>{1, 0});
  CHECK(r.pairs[2] == std::pair<Index, Index>{2, 2});
  CHECK(r.total_cost == doctest::Approx(5.0));
  CHECK(r.unmatched.empty());
}

TEST_CASE("hungarian: equals brute force on random matrices up to 6") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Index rows = 1 + rng.below(6), cols = 1 + rng.below(6);
    Eigen::MatrixXd c(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) c(i, j) = rng.uniform(-5, 10);
    const MatchResult r = hungarian_match(c);
    CHECK(static_cast<Index>(r.pairs.size()) == std::min(rows, cols));
    CHECK(static_cast<Index>(r.unmatched.size()) == rows - std::min(rows, cols));
    CHECK(r.total_cost == doctest::Approx(brute_force_cost(c)).epsilon(1e-12));
    std::vector<char> used_row(static_cast<std::size_t>(rows), 0), used_col(static_cast<std::size_t>(cols), 0);
    for (const auto& [i, j] : r.pairs) {
      CHECK(!used_row[static_cast<std::size_t>(i)]);
      CHECK(!used_col[static_cast<std::size_t>(j)]);
      used_row[static_cast<std::size_t>(i)] = used_col[static_cast<std::size_t>(j)] = 1;
    }
    CHECK(std::is_sorted(r.pairs.begin(), r.pairs.end()));
  }
}

TEST_CASE("hungarian: assignment invariant to positive scaling and row offsets") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd c(5, 5);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j) c(i, j) = rng.uniform(0, 1);
    Eigen::MatrixXd d = c * 7.5;
    for (Index i = 0; i < 5; ++i) d.row(i).array() += static_cast<double>(i);
    CHECK(hungarian_match(c).pairs == hungarian_match(d).pairs);
  }
}

TEST_CASE("hungarian: degenerate and invalid inputs") {
  CHECK(hungarian_match(Eigen::MatrixXd(0, 3)).pairs.empty());
  const MatchResult none = hungarian_match(Eigen::MatrixXd(4, 0));
  CHECK(none.unmatched.size() == 4);
  Eigen::MatrixXd c = Eigen::MatrixXd::Ones(2, 2);
  c(1, 0) = std::nan("");
  CHECK_THROWS_AS(hungarian_match(c), ContractError);
  c(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian_match(c), ContractError);
}

// ---------------------------------------------------------------- losses

TEST_CASE("focal: closed-form examples") {
  const Tensor fg = Tensor::from_data({1}, {1});
  CHECK(focal_loss(Tensor::from_data({1}, {0.5}), fg, 1, 0).item() == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(focal_loss(Tensor::from_data({1}, {0.9}), fg, 1, 2).item() ==
        doctest::Approx(0.01 * -std::log(0.9)).epsilon(1e-9));
  // Background entries carry 1 - alpha; normalization counts foreground only.
  const Tensor p = Tensor::from_data({2}, {0.5, 0.8});
  const Tensor mixed = Tensor::from_data({2}, {1, 0});
  const double expect = 0.25 * 0.25 * std::log(2.0) + 0.75 * 0.04 * -std::log(0.8);
  CHECK(focal_loss(p, mixed, 0.25, 2).item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(focal_term(0.9, 1, 2) == doctest::Approx(0.01 * -std::log(0.9)));
}

TEST_CASE("focal: gradient check") {
  Rng rng(5);
  Tensor p = random_tensor({6}, rng, 0.05, 0.95);
  const Tensor fg = Tensor::from_data({6}, {1, 0, 1, 0, 0, 1});
  const auto res = grad_check([&] { return focal_loss(p, fg, 0.25, 2); }, {p}, 1e-6);
  CHECK(res.max_rel_error < 1e-5);
}

TEST_CASE("quality focal: zero at the target and matches the scalar form") {
  const Tensor logit = Tensor::from_data({3}, {0.0, 1.2, -0.7});
  const Tensor at_target = Tensor::from_data({3}, {0.5, 1 / (1 + std::exp(-1.2)), 1 / (1 + std::exp(0.7))});
  CHECK(quality_focal_loss(logit, at_target).item() < 1e-20);
  const Tensor t = Tensor::from_data({3}, {0.0, 0.3, 1.0});
  double expect = 0;
  for (Index i = 0; i < 3; ++i) expect += quality_focal_term(1 / (1 + std::exp(-logit[i])), t[i]);
  CHECK(quality_focal_loss(logit, t).item() == doctest::Approx(expect).epsilon(1e-9));
  Rng rng(2);
  Tensor x = random_tensor({5}, rng, -2, 2);
  const Tensor tt = random_tensor({5}, rng, 0, 1, false);
  CHECK(grad_check([&] { return quality_focal_loss(x, tt); }, {x}, 1e-6).max_rel_error < 1e-5);
}

TEST_CASE("giou: examples, range and tensor agreement") {
  const std::array<double, 4> a{0.5, 0.5, 0.2, 0.2};
  CHECK(generalized_iou(a, a) == doctest::Approx(1));
  CHECK(box_iou(a, a) == doctest::Approx(1));
  // Side by side with a gap of 0.2: hull 0.6 x 0.2, union 0.08.
  const std::array<double, 4> b{0.9, 0.5, 0.2, 0.2};
  CHECK(generalized_iou(a, b) == doctest::Approx(-(0.12 - 0.08) / 0.12));
  // Half overlap: inter 0.02, union 0.06.
  const std::array<double, 4> c{0.6, 0.5, 0.2, 0.2};
  CHECK(box_iou(a, c) == doctest::Approx(1.0 / 3));
  Rng rng(9);
  std::vector<Real> va, vb;
  for (int i = 0; i < 50; ++i) {
    for (double v : {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)})
      va.push_back(static_cast<Real>(v));
    for (double v : {rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)})
      vb.push_back(static_cast<Real>(v));
  }
  const Tensor ta = Tensor::from_data({50, 4}, va), tb = Tensor::from_data({50, 4}, vb);
  const Tensor g = generalized_iou(ta, tb);
  for (Index i = 0; i < 50; ++i) {
    const auto at = [&](const std::vector<Real>& v) {
      return std::array<double, 4>{v[4 * i], v[4 * i + 1], v[4 * i + 2], v[4 * i + 3]};
    };
    const double s = generalized_iou(at(va), at(vb));
    CHECK(g[i] == doctest::Approx(s).epsilon(1e-12));
    CHECK(s >= -1);
    CHECK(s <= 1);
    CHECK(s <= box_iou(at(va), at(vb)) + 1e-15);
  }
}

TEST_CASE("giou: gradient check on overlapping boxes") {
  Rng rng(4);
  Tensor a = Tensor::from_data({2, 4}, {0.5, 0.5, 0.3, 0.2, 0.3, 0.6, 0.2, 0.4});
  Tensor b = Tensor::from_data({2, 4}, {0.55, 0.47, 0.25, 0.3, 0.36, 0.52, 0.3, 0.3});
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  CHECK(grad_check([&] { return sum(generalized_iou(a, b)); }, {a, b}, 1e-6, -1, 7, 1e-4).max_rel_error < 1e-5);
}

TEST_CASE("depth map loss: confident one-hot is near zero, empty scene is background only") {
  const Index k1 = 4;
  std::vector<Real> v(static_cast<std::size_t>(k1 * 4), -20);
  const std::vector<Index> labels = {0, 3, 2, 3};
  for (Index p = 0; p < 4; ++p) v[static_cast<std::size_t>(labels[static_cast<std::size_t>(p)] * 4 + p)] = 20;
  CHECK(depth_map_loss(Tensor::from_data({1, k1, 2, 2}, v), {labels}, 0.25, 2).item() < 1e-3);

  // No objects: every cell is background and the normalizer falls back to 1.
  const Tensor zero_logits = Tensor::zeros({1, k1, 2, 2});
  const double p = 0.25;
  const double expect = 4 * 0.75 * std::pow(1 - p, 2) * -std::log(p);
  CHECK(depth_map_loss(zero_logits, {{3, 3, 3, 3}}, 0.25, 2).item() == doctest::Approx(expect).epsilon(1e-12));

  geo::Annotation empty;
  const auto calib = geo::make_pinhole(100, 32, 32, 64, 64);
  const ImageTargets t = build_targets(empty, calib, 3, 2, 2, {1, 2, 3, 4});
  CHECK(t.objects.empty());
  CHECK(t.depth_labels == std::vector<Index>{3, 3, 3, 3});
}

TEST_CASE("depth map loss: two by two hand case") {
  // Logits for classes (bin0, bin1, background) at four pixels.
  const std::vector<double> l = {1, 0, 2, -1, 0.5, 0, 0, 0, 1, 3, 0, 0};
  const Tensor logits = Tensor::from_data({1, 3, 2, 2}, std::vector<Real>(l.begin(), l.end()));
  const std::vector<Index> labels = {0, 2, 1, 2};
  double total = 0;
  for (Index pix = 0; pix < 4; ++pix) {
    double z = 0;
    for (Index c = 0; c < 3; ++c) z += std::exp(l[static_cast<std::size_t>(c * 4 + pix)]);
    const Index y = labels[static_cast<std::size_t>(pix)];
    const double p = std::exp(l[static_cast<std::size_t>(y * 4 + pix)]) / z;
    total += focal_term(p, y == 2 ? 0.75 : 0.25, 2);
  }
  CHECK(depth_map_loss(logits, {labels}, 0.25, 2).item() == doctest::Approx(total / 2).epsilon(1e-12));
}

TEST_CASE("build targets: normalized box6, depth and nearest-object labels") {
  const auto calib = geo::make_pinhole(100, 32, 32, 64, 64);
  geo::Annotation ann;
  for (double z : {20.0, 10.0}) {
    geo::KittiObject o;
    o.type = "Car";
    o.box.category = geo::kCar;
    o.box.location = geo::Vec3(0, 1.5, z);
    o.box.h = 1.5;
    o.box.w = 1.6;
    o.box.l = 3.9;
    o.box.yaw = 0.3;
    o.alpha = geo::alpha_from_yaw(o.box.yaw, o.box.location);
    o.bbox = *geo::project_box(o.box, calib);
    ann.objects.push_back(o);
  }
  geo::KittiObject ped = ann.objects[0];
  ped.type = "Pedestrian";
  ped.box.category = geo::kPedestrian;
  ann.objects.push_back(ped);
  const std::vector<double> edges = lid_edges(8, 1, 60);
  const ImageTargets t = build_targets(ann, calib, 1, 8, 8, edges);
  REQUIRE(t.objects.size() == 2);  // the pedestrian lies outside the first class
  const auto& o = t.objects[1];
  const geo::Vec2 c = geo::project_gravity_center(ann.objects[1].box, calib);
  CHECK(o.box6[0] == doctest::Approx(c.x() / 64));
  CHECK(o.box6[1] == doctest::Approx(c.y() / 64));
  CHECK(o.box6[4] == doctest::Approx(ann.objects[1].bbox.width() / 64));
  CHECK(o.depth == 10);
  CHECK(o.sin_alpha == doctest::Approx(std::sin(ann.objects[1].alpha)));
  // Cell (3, 4) has its centre in both boxes; the nearer object wins.
  CHECK(t.depth_labels[static_cast<std::size_t>(4 * 8 + 3)] == depth_to_bin(10, edges));
  CHECK(t.depth_labels[0] == static_cast<Index>(edges.size()) - 1);
}

TEST_CASE("decoder loss: Laplacian depth, L1 dims and angle") {
  ObjectTarget gt;
  gt.box6 = {0.5, 0.5, 0.5, 0.5, 0.2, 0.3};
  gt.depth = 12;
  gt.dims = {1.5, 1.6, 4.0};
  gt.sin_alpha = 0.6;
  gt.cos_alpha = 0.8;
  ImageTargets t;
  t.objects = {gt};
  const double mu = 10, ls = 0.7;
  const Predictions p = single_prediction(gt.box6, mu, ls, {1.4, 1.6, 4.5}, 0.8, 0.6, 0.3);
  MatchResult m;
  m.pairs = {{0, 0}};
  const LayerLoss l = decoder_layer_loss(p, {t}, {m}, LossWeights{});
  CHECK(l.terms.at("depth") == doctest::Approx(2 * std::exp(-ls) * std::sqrt(2.0) + ls).epsilon(1e-12));
  CHECK(l.terms.at("dims") == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(l.terms.at("angle") == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(l.terms.at("l1") == doctest::Approx(0).scale(1e-12));
  CHECK(l.terms.at("giou") == doctest::Approx(0).scale(1e-12));
  CHECK(l.l_3d.item() == doctest::Approx(l.terms.at("depth") + 0.6 + 0.4).epsilon(1e-12));
  // A perfect depth leaves only the log-scale term.
  const Predictions exact = single_prediction(gt.box6, 12, -5, {1.5, 1.6, 4.0}, 0.6, 0.8, 0.3);
  CHECK(decoder_layer_loss(exact, {t}, {m}, LossWeights{}).l_3d.item() == doctest::Approx(-5).epsilon(1e-12));
}

TEST_CASE("match cost: a perfect prediction is the cheapest row") {
  ObjectTarget gt;
  gt.box6 = {0.4, 0.6, 0.4, 0.6, 0.2, 0.2};
  const std::vector<Real> boxes = {0.4, 0.6, 0.4, 0.6, 0.2, 0.2, 0.7, 0.3, 0.7, 0.3, 0.1, 0.1, 0.42, 0.6, 0.42, 0.6, 0.2, 0.2};
  const Tensor box6 = Tensor::from_data({1, 3, 6}, boxes);
  const Tensor logits = Tensor::from_data({1, 3, 1}, {1.0, 1.0, 1.0});
  const Eigen::MatrixXd c = match_cost(logits, box6, 0, {gt}, LossWeights{});
  CHECK(c(0, 0) < c(2, 0));
  CHECK(c(2, 0) < c(1, 0));
  // L1 and GIoU parts of the far row, plus the IoU-aware class term at IoU 0.
  const double p = 1 / (1 + std::exp(-1.0));
  const double far = 5 * (0.3 + 0.3 + 0.3 + 0.3 + 0.1 + 0.1) +
                     2 * (1 - generalized_iou({0.7, 0.3, 0.1, 0.1}, {0.4, 0.6, 0.2, 0.2})) +
                     2 * (quality_focal_term(p, 0) - quality_focal_term(p, 0));
  CHECK(c(1, 0) == doctest::Approx(far).epsilon(1e-12));
}

TEST_CASE("overall loss: zeros, linearity and recomposition") {
  const Tensor z = Tensor::scalar(0);
  CHECK(compose_overall(z, z, z, z, 5).item() == 0);
  const Tensor a = Tensor::scalar(3), b = Tensor::scalar(4), c = Tensor::scalar(5), d = Tensor::scalar(0.5);
  const double one = compose_overall(a, b, c, d, 4).item();
  const double two = compose_overall(a * 2, b * 2, c * 2, d * 2, 4).item();
  CHECK(two == doctest::Approx(2 * one).epsilon(1e-15));
  CHECK(one == doctest::Approx(12.0 / 4 + 0.5).epsilon(1e-15));
  CHECK(compose_overall(a, b, c, d, 0).item() == doctest::Approx(12.5));

  Detector model(tiny_config(), 3);
  const auto data = make_synthetic_dataset(2, 40, small_scenes());
  const LossBreakdown l = batch_loss(model, {&data[0], &data[1]}, LossWeights{});
  const double recomposed = (l.l_2d.item() + l.l_3d.item() + l.l_enc.item()) / std::max<Index>(l.num_gt, 1) +
                            l.l_dmap.item();
  CHECK(std::abs(l.overall.item() - recomposed) < 1e-12);
  CHECK(l.terms.at("cls") + l.terms.at("l1") + l.terms.at("giou") == doctest::Approx(l.l_2d.item()).epsilon(1e-9));
  CHECK(l.terms.at("depth") + l.terms.at("dims") + l.terms.at("angle") ==
        doctest::Approx(l.l_3d.item()).epsilon(1e-9));
  CHECK(default_loss_weights(DepthVariant::kA).dmap == 1.0);
  CHECK(default_loss_weights(DepthVariant::kE).dmap == 0.5);
}

// ---------------------------------------------------------------- optimizer

TEST_CASE("adamw: closed-form steps") {
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5});
  p.set_requires_grad(true);
  SUBCASE("zero gradient and no decay leaves parameters unchanged") {
    AdamW opt({p}, AdamWOptions{1e-2, 0.9, 0.999, 1e-8, 0.0});
    opt.step();
    opt.step();
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
  }
  SUBCASE("first step is lr * g / (|g| + eps)") {
    AdamW opt({p}, AdamWOptions{1e-2, 0.9, 0.999, 1e-8, 0.0});
    auto g = p.mutable_grad();
    g[0] = 0.3;
    g[1] = -4.0;
    g[2] = 1e-9;
    opt.step();
    CHECK(p[0] == doctest::Approx(1.0 - 1e-2 * 0.3 / (0.3 + 1e-8)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(-2.0 + 1e-2 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(0.5 - 1e-2 * 1e-9 / (1e-9 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("decay alone scales by 1 - lr * wd") {
    AdamW opt({p}, AdamWOptions{0.1, 0.9, 0.999, 1e-8, 0.5});
    opt.step();
    CHECK(p[0] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-15));
    CHECK(opt.steps() == 1);
  }
}

TEST_CASE("clip grad norm rescales to the bound") {
  Tensor a = Tensor::from_data({2}, {0, 0}), b = Tensor::from_data({1}, {0});
  a.mutable_grad()[0] = 3;
  a.mutable_grad()[1] = 0;
  b.mutable_grad()[0] = 4;
  std::vector<Tensor> ps = {a, b};
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(b.grad()[0] == doctest::Approx(0.8));
  CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(1));
  CHECK(b.grad()[0] == doctest::Approx(0.8));
}

TEST_CASE("multi-step schedule") {
  const MultiStepSchedule s(2e-4, {5, 3});
  const std::vector<double> expect = {2e-4, 2e-4, 2e-4, 2e-5, 2e-5, 2e-6, 2e-6};
  for (Index e = 0; e < 7; ++e) CHECK(s.lr(e) == doctest::Approx(expect[static_cast<std::size_t>(e)]).epsilon(1e-15));
  CHECK(MultiStepSchedule(1.0, {}).lr(100) == 1.0);
}

// ---------------------------------------------------------------- synthetic data

TEST_CASE("synth: deterministic per seed") {
  const SynthConfig cfg;
  const auto a = synth_scene(17, cfg), b = synth_scene(17, cfg), c = synth_scene(18, cfg);
  CHECK(a.image.rgb == b.image.rgb);
  CHECK(geo::serialize_kitti_label(a.annotation) == geo::serialize_kitti_label(b.annotation));
  CHECK(a.image.rgb != c.image.rgb);
}

TEST_CASE("synth: label ranges, placement and round trip") {
  const SynthConfig cfg;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = synth_scene(seed, cfg);
    const auto& objs = s.annotation.objects;
    CHECK(objs.size() >= 1);
    CHECK(objs.size() <= 5);
    for (std::size_t i = 0; i < objs.size(); ++i) {
      const auto& o = objs[i];
      CHECK(o.box.location.z() >= 4);
      CHECK(o.box.location.z() <= 40);
      CHECK(o.box.location.y() == cfg.camera_height);
      CHECK(o.type == "Car");
      CHECK(o.alpha == doctest::Approx(geo::alpha_from_yaw(o.box.yaw, o.box.location)));
      for (std::size_t j = i + 1; j < objs.size(); ++j) CHECK(geo::bev_intersection(o.box, objs[j].box) == 0);
    }
    const auto parsed = geo::parse_kitti_label(geo::serialize_kitti_label(s.annotation));
    REQUIRE(parsed.objects.size() == objs.size());
    for (std::size_t i = 0; i < objs.size(); ++i) {
      CHECK(parsed.objects[i].box.location == objs[i].box.location);
      CHECK(parsed.objects[i].box.yaw == objs[i].box.yaw);
      CHECK(parsed.objects[i].bbox.x_min == objs[i].bbox.x_min);
      CHECK(parsed.objects[i].occlusion == objs[i].occlusion);
    }
  }
}

TEST_CASE("synth: 2D box is the clipped hull of the projected corners") {
  const SynthConfig cfg;
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto s = synth_scene(seed, cfg);
    for (const auto& o : s.annotation.objects) {
      double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
      for (const auto& c : geo::box3d_corners(o.box)) {
        const double u = s.calib.P(0, 0) * c.x() / c.z() + s.calib.P(0, 2);
        const double v = s.calib.P(1, 1) * c.y() / c.z() + s.calib.P(1, 2);
        x0 = std::min(x0, u);
        x1 = std::max(x1, u);
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
      }
      CHECK(o.bbox.x_min == doctest::Approx(std::clamp(x0, 0.0, cfg.width - 1.0)));
      CHECK(o.bbox.x_max == doctest::Approx(std::clamp(x1, 0.0, cfg.width - 1.0)));
      CHECK(o.bbox.y_min == doctest::Approx(std::clamp(y0, 0.0, cfg.height - 1.0)));
      CHECK(o.bbox.y_max == doctest::Approx(std::clamp(y1, 0.0, cfg.height - 1.0)));
      CHECK(o.truncation >= 0);
      CHECK(o.truncation <= 1);
    }
  }
}

TEST_CASE("synth: rendered pixels reflect the objects") {
  // Pixels at a visible box centre differ from the empty background.
  SynthConfig cfg;
  cfg.min_objects = 1;
  cfg.max_objects = 1;
  cfg.depth_max = 10;
  const auto s = synth_scene(5, cfg);
  SynthConfig empty = cfg;
  empty.min_objects = empty.max_objects = 0;
  const auto bg = synth_scene(5, empty);
  REQUIRE(s.annotation.objects.size() == 1);
  const auto& b = s.annotation.objects[0].bbox;
  const int cx = static_cast<int>((b.x_min + b.x_max) / 2), cy = static_cast<int>((b.y_min + b.y_max) / 2);
  CHECK(s.image.at(cx, cy) != bg.image.at(cx, cy));
  CHECK(bg.annotation.objects.empty());
}

TEST_CASE("synth: config validation") {
  SynthConfig c;
  c.depth_min = 50;
  CHECK_THROWS_AS(synth_scene(0, c), ConfigError);
  c = SynthConfig{};
  c.categories = {7};
  CHECK_THROWS_AS(synth_scene(0, c), ConfigError);
  c = SynthConfig{};
  c.max_objects = 0;
  CHECK_THROWS_AS(synth_scene(0, c), ConfigError);
}

// ---------------------------------------------------------------- dataset

TEST_CASE("dataset: padding to multiples of 32") {
  const Tensor img = Tensor::full({3, 40, 50}, 0.5);
  const Tensor p = pad_image(img, 32);
  CHECK(p.shape() == Shape{3, 64, 64});
  CHECK(p[0] == 0.5);
  CHECK(p[63] == 0);
  CHECK(p[64 * 39 + 49] == 0.5);
  CHECK(p[64 * 40] == 0);
}

TEST_CASE("dataset: flip mirrors x, yaw, alpha, the 2D box and the image") {
  const auto data = make_synthetic_dataset(3, 7, SynthConfig{});
  for (const auto& s : data) {
    const Sample f = flip_sample(s);
    const Index W = s.calib.width;
    CHECK(f.image[5 * W + 0] == s.image[5 * W + (W - 1)]);
    for (std::size_t i = 0; i < s.annotation.objects.size(); ++i) {
      const auto& a = s.annotation.objects[i];
      const auto& b = f.annotation.objects[i];
      CHECK(b.box.location.x() == -a.box.location.x());
      CHECK(std::cos(b.box.yaw) == doctest::Approx(-std::cos(a.box.yaw)));
      CHECK(std::sin(b.box.yaw) == doctest::Approx(std::sin(a.box.yaw)));
      CHECK(b.alpha == doctest::Approx(geo::alpha_from_yaw(b.box.yaw, b.box.location)));
      CHECK(b.bbox.x_min == doctest::Approx(W - a.bbox.x_max));
      // Labels stay consistent with the mirrored camera.
      const geo::Vec2 c = geo::project_gravity_center(b.box, f.calib);
      const geo::Vec2 c0 = geo::project_gravity_center(a.box, s.calib);
      CHECK(c.x() == doctest::Approx(W - c0.x()));
      CHECK(c.y() == doctest::Approx(c0.y()));
    }
    const Sample back = flip_sample(f);
    CHECK(std::equal(back.image.data().begin(), back.image.data().end(), s.image.data().begin()));
    CHECK(back.calib.P.isApprox(s.calib.P));
  }
}

TEST_CASE("dataset: written synthetic directory loads back") {
  const auto dir = fresh_dir("roundtrip");
  SynthConfig cfg = small_scenes();
  cfg.width = 70;  // padded to 96 on load
  write_synthetic_dataset(dir, 3, 21, cfg);
  const auto loaded = load_kitti_dir(dir);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[0].id == "000000");
  CHECK(loaded[2].id == "000002");
  CHECK(loaded[0].image.shape() == Shape{3, 64, 96});
  CHECK(loaded[0].calib.width == 70);
  const auto direct = synth_scene(22, cfg);
  CHECK(geo::serialize_kitti_label(loaded[1].annotation) == geo::serialize_kitti_label(direct.annotation));
  CHECK(loaded[1].calib.P == direct.calib.P);
  CHECK_THROWS_AS(load_kitti_dir(dir / "missing"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset: stacking requires one image size") {
  const auto a = make_synthetic_dataset(2, 1, small_scenes());
  CHECK(stack_images({&a[0], &a[1]}).shape() == Shape{2, 3, 64, 64});
  SynthConfig big = small_scenes();
  big.width = 96;
  const auto b = make_synthetic_dataset(1, 1, big);
  CHECK_THROWS_AS(stack_images({&a[0], &b[0]}), ConfigError);
}

// ---------------------------------------------------------------- trainer

TEST_CASE("trainer: epoch order and flips are seeded permutations") {
  const auto o = epoch_order(10, 4, 0);
  std::vector<std::size_t> sorted = o;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> iota(10);
  std::iota(iota.begin(), iota.end(), std::size_t{0});
  CHECK(sorted == iota);
  CHECK(epoch_order(10, 4, 0) == o);
  CHECK(epoch_order(10, 4, 1) != o);
  CHECK(epoch_flips(1000, 4, 0) == epoch_flips(1000, 4, 0));
  const auto f = epoch_flips(1000, 4, 0);
  const auto ones = std::count(f.begin(), f.end(), true);
  CHECK(ones > 430);
  CHECK(ones < 570);
}

TEST_CASE("trainer: config validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  Detector model(tiny_config(), 1);
  CHECK_THROWS_AS(Trainer(model, c, LossWeights{}), ConfigError);
}

TEST_CASE("trainer: one-epoch smoke run writes metrics and checkpoints; step 0 replays") {
  const auto dir = fresh_dir("smoke");
  const auto data = make_synthetic_dataset(4, 60, small_scenes());
  Detector model(tiny_config(), 8);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.lr = 1e-3;
  tc.seed = 5;
  tc.out_dir = dir;
  Trainer trainer(model, tc, LossWeights{});
  const TrainResult r = trainer.fit(data);
  REQUIRE(r.steps.size() == 2);
  CHECK(r.epochs_run == 1);
  CHECK(std::filesystem::exists(dir / "init.ckpt"));
  CHECK(std::filesystem::exists(dir / "model.ckpt"));
  const std::string tsv = slurp(dir / "metrics.tsv");
  CHECK(tsv.rfind(metrics_header(), 0) == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 3);
  CHECK(tsv.find(metrics_row(r.steps[1])) != std::string::npos);

  // Reloading the initial weights reproduces the logged step-0 loss exactly.
  Detector replay(tiny_config(), 99);
  load_checkpoint(dir / "init.ckpt", replay);
  const auto order = epoch_order(data.size(), tc.seed, 0);
  const LossBreakdown l = batch_loss(replay, {&data[order[0]], &data[order[1]]}, LossWeights{});
  CHECK(l.overall.item() == r.steps[0].overall);
  CHECK(l.l_dmap.item() == r.steps[0].l_dmap);

  // The final checkpoint holds the trained weights.
  Detector reloaded(tiny_config(), 99);
  load_checkpoint(dir / "model.ckpt", reloaded);
  CHECK(encode_checkpoint(reloaded.state()) == encode_checkpoint(model.state()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("trainer: identically seeded runs give identical logs") {
  const auto data = make_synthetic_dataset(4, 61, small_scenes());
  std::vector<std::string> logs;
  for (int run = 0; run < 2; ++run) {
    const auto dir = fresh_dir("det" + std::to_string(run));
    Detector model(tiny_config(), 2);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 2;
    tc.flip = true;
    tc.seed = 9;
    tc.out_dir = dir;
    Trainer(model, tc, LossWeights{}).fit(data);
    logs.push_back(slurp(dir / "metrics.tsv"));
    std::filesystem::remove_all(dir);
  }
  CHECK(logs[0] == logs[1]);
}

TEST_CASE("trainer: learning rate follows the milestones exactly") {
  const auto data = make_synthetic_dataset(2, 62, small_scenes());
  Detector model(tiny_config(), 2);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 2;
  tc.lr = 1e-3;
  tc.milestones = {1, 3};
  const TrainResult r = Trainer(model, tc, LossWeights{}).fit(data);
  REQUIRE(r.steps.size() == 4);
  CHECK(r.steps[0].lr == 1e-3);
  CHECK(r.steps[1].lr == 1e-3 * 0.1);
  CHECK(r.steps[2].lr == 1e-3 * 0.1);
  CHECK(r.steps[3].lr == 1e-3 * 0.1 * 0.1);
}

TEST_CASE("trainer: non-finite values abort and keep the last good checkpoint") {
  const auto dir = fresh_dir("nan");
  const auto data = make_synthetic_dataset(4, 63, small_scenes());
  Detector model(tiny_config(), 4);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.out_dir = dir;
  std::vector<std::uint8_t> good;
  Trainer trainer(model, tc, LossWeights{});
  const auto poison = [&](const StepMetrics& m) {
    if (m.step == 1) good = encode_checkpoint(model.state());
    if (m.step == 2) {
      Tensor w = model.heads->named_parameters().front().second;
      w.mutable_data()[0] = std::numeric_limits<Real>::quiet_NaN();
    }
  };
  CHECK_THROWS_AS(trainer.fit(data, poison), NumericError);
  Detector reloaded(tiny_config(), 4);
  load_checkpoint(dir / "model.ckpt", reloaded);
  CHECK(encode_checkpoint(reloaded.state()) == good);
  const std::string tsv = slurp(dir / "metrics.tsv");
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 4);  // header and steps 0 to 2
  std::filesystem::remove_all(dir);
}

TEST_CASE("trainer: every parameter receives gradient over ten batches") {
  ModelConfig cfg = tiny_config();
  cfg.strategy = QueryStrategy::kEncCenterEncBox;
  Detector model(cfg, 12);
  const auto data = make_synthetic_dataset(20, 300, small_scenes());
  TrainConfig tc;
  tc.batch_size = 2;
  tc.lr = 1e-3;
  Trainer trainer(model, tc, LossWeights{});
  const auto named = model.named_parameters();
  std::vector<char> touched(named.size(), 0);
  for (Index b = 0; b < 10; ++b) {
    trainer.step({&data[static_cast<std::size_t>(2 * b)], &data[static_cast<std::size_t>(2 * b + 1)]}, 0);
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto g = named[i].second.grad();
      if (std::any_of(g.begin(), g.end(), [](Real v) { return v != 0; })) touched[i] = 1;
    }
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    INFO(named[i].first);
    CHECK(touched[i]);
  }
}

TEST_CASE("predict and evaluate: labels as predictions score perfectly") {
  const auto data = make_synthetic_dataset(6, 70, SynthConfig{});
  std::vector<geo::Annotation> preds;
  for (const auto& s : data) {
    geo::Annotation a = s.annotation;
    for (auto& o : a.objects) o.box.score = 0.9;
    preds.push_back(a);
  }
  const auto rep = evaluate_samples(data, preds, {0.25, 0.7}, {geo::kCar});
  for (const auto& row : rep.rows)
    if (!row.result.empty_ground_truth) CHECK(row.result.ap == doctest::Approx(1.0));
  Detector model(tiny_config(), 5);
  SynthConfig s64 = small_scenes();
  const auto small = make_synthetic_dataset(3, 70, s64);
  const auto out = predict(model, small, 2, DecodeOptions{0.0, 5});
  REQUIRE(out.size() == 3);
  for (const auto& a : out) {
    CHECK(a.objects.size() <= 5);
    for (std::size_t i = 1; i < a.objects.size(); ++i) CHECK(*a.objects[i - 1].box.score >= *a.objects[i].box.score);
  }
  CHECK(model.training());
}
