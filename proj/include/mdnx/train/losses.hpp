#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mdnx/geometry/kitti.hpp"
#include "mdnx/model/model.hpp"
#include "mdnx/train/matching.hpp"

namespace mdnx {

/// One supervised object in normalized image coordinates.
struct ObjectTarget {
  int category = 0;
  std::array<double, 6> box6{};  // [x_c, y_c, x, y, w, h]
  double depth = 0;              // z of the box center, meters
  std::array<double, 3> dims{};  // (h, w, l)
  double sin_alpha = 0, cos_alpha = 1;
};

struct ImageTargets {
  std::vector<ObjectTarget> objects;
  std::vector<Index> depth_labels;  // grid_h * grid_w; background is k
};

/// Objects whose category is one of the first `classes` detection classes,
/// plus the foreground depth labels of a grid_h x grid_w map: a cell whose
/// center falls inside a 2D box carries that object's bin (nearest object
/// wins), every other cell is background.
ImageTargets build_targets(const geo::Annotation& ann, const geo::CameraCalib& calib, Index classes, Index grid_h,
                           Index grid_w, const std::vector<double>& edges);

struct LossWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
  double dmap = 0.5;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};
/// Depth-map weight is larger for variant A than for variant E.
LossWeights default_loss_weights(DepthVariant v);

// ---- scalar helpers (also used for matching costs) ----

/// Boxes as (cx, cy, w, h).
double box_iou(const std::array<double, 4>& a, const std::array<double, 4>& b);
double generalized_iou(const std::array<double, 4>& a, const std::array<double, 4>& b);
/// -|t - p|^2 [t log p + (1 - t) log(1 - p)] with p clamped to [1e-7, 1 - 1e-7].
double quality_focal_term(double p, double t);
/// -alpha (1 - p)^gamma log p with p clamped to [1e-7, 1].
double focal_term(double p, double alpha, double gamma);

// ---- differentiable pieces ----

/// [M, 4] x [M, 4] -> [M] generalized IoU of (cx, cy, w, h) boxes.
Tensor generalized_iou(const Tensor& a, const Tensor& b);
/// Sum over all entries of |t - sigmoid(x)|^2 * BCE(x, t).
Tensor quality_focal_loss(const Tensor& logits, const Tensor& targets);
/// p_t: probabilities of the true class, fg: 1 for foreground entries, 0 for
/// background. Returns sum(w (1 - p_t)^gamma (-log p_t)) / max(#fg, 1) with
/// w = alpha on foreground and 1 - alpha on background.
Tensor focal_loss(const Tensor& p_t, const Tensor& fg, double alpha, double gamma);
/// Softmax focal loss of [N, k+1, h, w] logits against per-image labels.
Tensor depth_map_loss(const Tensor& logits, const std::vector<std::vector<Index>>& labels, double alpha,
                      double gamma);

struct CostOptions {
  std::array<bool, 6> l1_mask{true, true, true, true, true, true};
  bool use_giou = true;
  bool class_agnostic = false;  // logits have one column shared by every category
};

/// [Q, n_gt] matching cost of image `batch`:
/// cls * (QFL(p, IoU) - QFL(p, 0)) + l1 * |box6 - gt|_1 + giou * (1 - GIoU).
Eigen::MatrixXd match_cost(const Tensor& logits, const Tensor& box6, Index batch,
                           const std::vector<ObjectTarget>& gts, const LossWeights& w, const CostOptions& opts = {});

struct LossBreakdown {
  Tensor l_2d, l_3d, l_enc, l_dmap, overall;
  Index num_gt = 0;
  std::map<std::string, double> terms;  // named sub-terms, summed over layers
};

/// (l_2d + l_3d + l_enc) / max(n_gt, 1) + l_dmap
Tensor compose_overall(const Tensor& l_2d, const Tensor& l_3d, const Tensor& l_enc, const Tensor& l_dmap,
                       Index n_gt);

struct LayerLoss {
  Tensor l_2d, l_3d;
  std::map<std::string, double> terms;
};
/// Decoder-output losses for one layer given per-image matches.
LayerLoss decoder_layer_loss(const Predictions& pred, const std::vector<ImageTargets>& targets,
                             const std::vector<MatchResult>& matches, const LossWeights& w);
std::vector<MatchResult> match_layer(const Predictions& pred, const std::vector<ImageTargets>& targets,
                                     const LossWeights& w);

/// Encoder proposal loss: L1 (+ GIoU) on the supervised anchor components and
/// quality-focal objectness with the matched 2D IoU as target.
Tensor encoder_loss(const EncoderProposals& enc, const std::vector<ImageTargets>& targets, const LossWeights& w,
                    std::map<std::string, double>* terms = nullptr);

/// Full loss stack with deep supervision over every decoder layer.
LossBreakdown compute_losses(const ModelOutput& out, const std::vector<ImageTargets>& targets, const LossWeights& w);

}  // namespace mdnx
