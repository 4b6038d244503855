#include "mdnx/geometry/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "json.hpp"

#include "mdnx/geometry/image.hpp"

namespace mdnx::geo {

ApResult average_precision_40(const std::vector<ApImage>& images, double iou_threshold, const IouFn& iou) {
  struct Ranked {
    double score;
    std::size_t image;
    std::size_t index;
  };
  std::vector<Ranked> order;
  ApResult res;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = 0; j < images[i].predictions.size(); ++j) order.push_back({images[i].predictions[j].score, i, j});
    for (const auto& g : images[i].ground_truth) res.num_gt += g.care ? 1 : 0;
  }
  std::stable_sort(order.begin(), order.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  std::vector<std::vector<char>> used(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) used[i].assign(images[i].ground_truth.size(), 0);

  int tp = 0, fp = 0;
  std::vector<int> tp_at;  // cumulative TP per curve point, for exact recall tests
  for (const auto& r : order) {
    const auto& img = images[r.image];
    const Box3D& pred = img.predictions[r.index].box;
    int best_care = -1, best_ignore = -1;
    double best_care_iou = -1, best_ignore_iou = -1;
    for (std::size_t g = 0; g < img.ground_truth.size(); ++g) {
      if (used[r.image][g]) continue;
      const double v = iou(pred, img.ground_truth[g].box);
      if (v < iou_threshold) continue;
      if (img.ground_truth[g].care) {
        if (v > best_care_iou) best_care_iou = v, best_care = static_cast<int>(g);
      } else if (v > best_ignore_iou) {
        best_ignore_iou = v, best_ignore = static_cast<int>(g);
      }
    }
    if (best_care >= 0) {
      used[r.image][static_cast<std::size_t>(best_care)] = 1;
      ++tp;
    } else if (best_ignore >= 0) {
      used[r.image][static_cast<std::size_t>(best_ignore)] = 1;
      continue;
    } else {
      ++fp;
    }
    if (res.num_gt > 0) {
      res.curve.push_back({double(tp) / res.num_gt, double(tp) / (tp + fp)});
      tp_at.push_back(tp);
    }
  }
  res.true_positives = tp;
  res.false_positives = fp;
  if (res.num_gt == 0) {
    res.empty_ground_truth = true;
    return res;
  }

  // Compensated sum keeps rational cases such as 5/6 exact to the last bit.
  double sum = 0, carry = 0;
  for (int k = 1; k <= kRecallPositions; ++k) {
    double best = 0;
    for (std::size_t i = 0; i < res.curve.size(); ++i)
      if (static_cast<long>(tp_at[i]) * kRecallPositions >= static_cast<long>(k) * res.num_gt)
        best = std::max(best, res.curve[i].precision);
    res.interpolated[static_cast<std::size_t>(k - 1)] = best;
    const double y = best - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  res.ap = sum / kRecallPositions;
  return res;
}

const char* iou_kind_name(IouKind k) { return k == IouKind::k3d ? "3d" : "bev"; }

IouFn iou_function(IouKind k) {
  if (k == IouKind::k3d) return [](const Box3D& a, const Box3D& b) { return iou_3d(a, b); };
  return [](const Box3D& a, const Box3D& b) { return bev_iou(a, b); };
}

namespace {

bool neighbor_type(int category, const std::string& type) {
  return (category == kCar && type == "Van") || (category == kPedestrian && type == "Person_sitting");
}

}  // namespace

std::vector<ApImage> build_ap_images(const std::vector<Annotation>& ground_truth,
                                     const std::vector<Annotation>& predictions, int category, Difficulty tier,
                                     const DifficultyThresholds& thresholds) {
  if (ground_truth.size() != predictions.size()) {
    throw ContractError("ground truth and prediction image counts differ");
  }
  std::vector<ApImage> out(ground_truth.size());
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    for (const auto& o : ground_truth[i].objects) {
      if (o.box.category == category) {
        out[i].ground_truth.push_back({o.box, in_difficulty(o, tier, thresholds)});
      } else if (neighbor_type(category, o.type)) {
        out[i].ground_truth.push_back({o.box, false});
      }
    }
    for (const auto& o : predictions[i].objects)
      if (o.box.category == category) out[i].predictions.push_back({o.box, o.box.score.value_or(1.0)});
  }
  return out;
}

const EvalRow& EvalReport::find(int category, Difficulty d, IouKind metric, double iou_threshold) const {
  for (const auto& r : rows)
    if (r.category == category && r.difficulty == d && r.metric == metric && r.iou_threshold == iou_threshold) return r;
  throw ContractError("no evaluation row for " + std::string(category_name(category)) + "/" + difficulty_name(d));
}

EvalReport evaluate(const std::vector<Annotation>& ground_truth, const std::vector<Annotation>& predictions,
                    const EvalConfig& config) {
  if (config.iou_thresholds.empty()) throw ConfigError("evaluation needs at least one IoU threshold");
  EvalReport rep;
  rep.images = static_cast<int>(ground_truth.size());
  for (int cat : config.categories)
    for (int d = 0; d < kNumDifficulties; ++d) {
      const auto images = build_ap_images(ground_truth, predictions, cat, static_cast<Difficulty>(d), config.difficulty);
      for (IouKind kind : {IouKind::k3d, IouKind::kBev}) {
        const IouFn fn = iou_function(kind);
        for (double thr : config.iou_thresholds) {
          rep.rows.push_back({cat, static_cast<Difficulty>(d), kind, thr, average_precision_40(images, thr, fn)});
        }
      }
    }
  return rep;
}

EvalReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                            const std::filesystem::path& calib_dir, const EvalConfig& config) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(gt_dir)) throw ParseError("ground-truth directory " + gt_dir.string() + " does not exist");
  std::set<std::string> stems;
  for (const auto& e : fs::directory_iterator(gt_dir))
    if (e.is_regular_file() && e.path().extension() == ".txt") stems.insert(e.path().stem().string());

  std::vector<Annotation> gts, preds;
  std::vector<std::string> missing;
  for (const auto& stem : stems) {
    const fs::path name = stem + ".txt";
    bool skip = false;
    if (!calib_dir.empty()) {
      if (!fs::exists(calib_dir / name)) {
        missing.push_back("calib:" + stem);
        skip = skip || config.skip_missing;
      } else {
        parse_kitti_calib(read_text_file(calib_dir / name));
      }
    }
    Annotation pred;
    if (fs::exists(pred_dir / name)) {
      pred = parse_kitti_label(read_text_file(pred_dir / name));
    } else {
      missing.push_back("prediction:" + stem);
      skip = skip || config.skip_missing;
    }
    if (skip) continue;
    gts.push_back(parse_kitti_label(read_text_file(gt_dir / name)));
    preds.push_back(std::move(pred));
  }
  if (fs::is_directory(pred_dir)) {
    for (const auto& e : fs::directory_iterator(pred_dir))
      if (e.path().extension() == ".txt" && !stems.count(e.path().stem().string()))
        missing.push_back("ground_truth:" + e.path().stem().string());
  }
  std::sort(missing.begin(), missing.end());
  EvalReport rep = evaluate(gts, preds, config);
  rep.missing = std::move(missing);
  return rep;
}

std::string report_tsv(const EvalReport& report) {
  std::string out = "category\tdifficulty\tmetric\tiou\tap40\tnum_gt\ttp\tfp\twarning\n";
  char buf[64];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.result.ap);
    out += std::string(category_name(r.category)) + '\t' + difficulty_name(r.difficulty) + '\t' +
           iou_kind_name(r.metric) + '\t' + format_number(r.iou_threshold) + '\t' + buf + '\t' +
           std::to_string(r.result.num_gt) + '\t' + std::to_string(r.result.true_positives) + '\t' +
           std::to_string(r.result.false_positives) + '\t' + (r.result.empty_ground_truth ? "empty_gt" : "-") + '\n';
  }
  return out;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["images"] = report.images;
  j["missing"] = report.missing;
  j["results"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    j["results"].push_back({{"category", category_name(r.category)},
                            {"difficulty", difficulty_name(r.difficulty)},
                            {"metric", iou_kind_name(r.metric)},
                            {"iou", r.iou_threshold},
                            {"ap40", r.result.ap},
                            {"num_gt", r.result.num_gt},
                            {"tp", r.result.true_positives},
                            {"fp", r.result.false_positives},
                            {"warning", r.result.empty_ground_truth ? "empty_gt" : ""}});
  }
  return j.dump(2) + "\n";
}

namespace {

// 200x200 plot area with a 20 px margin; recall on x, precision on y.
Image render_pr_curve(const ApResult& res) {
  constexpr int kSize = 240, kMargin = 20, kPlot = 200;
  Image img(kSize, kSize, {255, 255, 255});
  auto px = [&](double r) { return kMargin + r * kPlot; };
  auto py = [&](double p) { return kMargin + (1 - p) * kPlot; };
  const Rgb axis = {0, 0, 0}, grid = {220, 220, 220}, raw = {120, 120, 255}, interp = {220, 30, 30};
  for (int t = 1; t < 10; ++t) {
    draw_line(img, px(t / 10.0), py(0), px(t / 10.0), py(1), grid);
    draw_line(img, px(0), py(t / 10.0), px(1), py(t / 10.0), grid);
  }
  draw_line(img, px(0), py(0), px(1), py(0), axis);
  draw_line(img, px(0), py(0), px(0), py(1), axis);
  for (std::size_t i = 1; i < res.curve.size(); ++i)
    draw_line(img, px(res.curve[i - 1].recall), py(res.curve[i - 1].precision), px(res.curve[i].recall),
              py(res.curve[i].precision), raw);
  for (int k = 1; k <= kRecallPositions; ++k) {
    const double p = res.interpolated[static_cast<std::size_t>(k - 1)];
    draw_line(img, px((k - 1) / 40.0), py(p), px(k / 40.0), py(p), interp);
  }
  return img;
}

}  // namespace

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.tsv", report_tsv(report));
  write_text_file(dir / "report.json", report_json(report));
  for (const auto& r : report.rows) {
    const std::string name = std::string("pr_") + category_name(r.category) + "_" + difficulty_name(r.difficulty) + "_" +
                             iou_kind_name(r.metric) + "_" + format_number(r.iou_threshold) + ".ppm";
    write_ppm(render_pr_curve(r.result), dir / name);
  }
}

}  // namespace mdnx::geo
