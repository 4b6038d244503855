#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mdnx/geometry/kitti.hpp"

namespace mdnx::geo {

using IouFn = std::function<double(const Box3D&, const Box3D&)>;

struct ApPrediction {
  Box3D box;
  double score = 0;
};

struct ApGroundTruth {
  Box3D box;
  bool care = true;  // false: "don't care", never counted or penalized
};

struct ApImage {
  std::vector<ApPrediction> predictions;
  std::vector<ApGroundTruth> ground_truth;
};

struct PrPoint {
  double recall = 0;
  double precision = 0;
};

inline constexpr int kRecallPositions = 40;

struct ApResult {
  double ap = 0;
  bool empty_ground_truth = false;
  int num_gt = 0;
  int true_positives = 0;
  int false_positives = 0;
  std::vector<PrPoint> curve;  // one point per counted prediction, score order
  std::array<double, kRecallPositions> interpolated{};
};

/// Greedy matching in descending score order across all images. A prediction
/// takes the unmatched cared-for GT of highest IoU >= threshold; failing that,
/// an overlapping don't-care GT silences it; otherwise it is a false positive.
ApResult average_precision_40(const std::vector<ApImage>& images, double iou_threshold, const IouFn& iou);

enum class IouKind { k3d, kBev };
const char* iou_kind_name(IouKind k);
IouFn iou_function(IouKind k);

/// Builds per-image matching inputs for one category and tier. Objects of the
/// category outside the tier, and of neighboring KITTI types (Van for Car,
/// Person_sitting for Pedestrian), become don't-care.
std::vector<ApImage> build_ap_images(const std::vector<Annotation>& ground_truth,
                                     const std::vector<Annotation>& predictions, int category, Difficulty tier,
                                     const DifficultyThresholds& thresholds);

struct EvalConfig {
  std::vector<double> iou_thresholds;  // required, no implicit default
  DifficultyThresholds difficulty;
  std::vector<int> categories = {kCar, kPedestrian, kCyclist};
  bool skip_missing = false;
};

struct EvalRow {
  int category = 0;
  Difficulty difficulty = Difficulty::kEasy;
  IouKind metric = IouKind::k3d;
  double iou_threshold = 0;
  ApResult result;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> missing;  // "<kind>:<stem>" entries
  int images = 0;

  /// Throws ContractError when no row matches.
  const EvalRow& find(int category, Difficulty d, IouKind metric, double iou_threshold) const;
};

EvalReport evaluate(const std::vector<Annotation>& ground_truth, const std::vector<Annotation>& predictions,
                    const EvalConfig& config);

/// Pairs files by stem: every `<stem>.txt` in `gt_dir` looks for the same name
/// in `pred_dir` and, when `calib_dir` is non-empty, in `calib_dir`.
EvalReport evaluate_dataset(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                            const std::filesystem::path& calib_dir, const EvalConfig& config);

/// Columns: category, difficulty, metric, iou, ap40, num_gt, tp, fp, warning.
std::string report_tsv(const EvalReport& report);
/// {"images": n, "missing": [...], "results": [{"category", "difficulty",
///  "metric", "iou", "ap40", "num_gt", "tp", "fp", "warning"}]}
std::string report_json(const EvalReport& report);
/// Writes report.tsv, report.json and one pr_<category>_<tier>_<metric>_<iou>.ppm
/// per row into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace mdnx::geo
