#pragma once

#include <memory>
#include <vector>

#include "mdnx/geometry/kitti.hpp"
#include "mdnx/model/depth_net.hpp"
#include "mdnx/model/detect_head.hpp"
#include "mdnx/model/feature_net.hpp"

namespace mdnx {

struct ModelOutput {
  Tensor fv, fd;               // [N, C, h, w]
  Tensor depth_logits;         // [N, k+1, h, w]
  QuerySet initial;            // anchors and content entering the decoder
  EncoderProposals enc;
  std::vector<Predictions> layers;  // one per decoder layer; back() is final
  Tensor visual_weights;       // final layer, [N, heads, Q, h*w]
  Index grid_h = 0, grid_w = 0;
};

class Detector : public Module {
 public:
  Detector(const ModelConfig& cfg, std::uint64_t seed);

  /// images: [N, 3, H, W] with H, W divisible by 32.
  ModelOutput forward(const Tensor& images);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<double>& bin_edges() const { return edges_; }

  std::shared_ptr<Backbone> backbone;
  std::shared_ptr<VisionEncoder> encoder;
  std::shared_ptr<LightDepth> light_depth;
  std::shared_ptr<AccurateDepth> accurate_depth;
  std::shared_ptr<Conv2d> depth_head;
  std::shared_ptr<EmbeddingTable> depth_pos_table;  // meter-wise / k-bin f_D positions
  std::shared_ptr<AnchorGenerator> anchors;
  std::shared_ptr<EmbeddingTable> query_pos_table;  // meter-wise / k-bin query positions
  std::shared_ptr<Mlp> query_pos_proj;
  std::vector<std::shared_ptr<DecoderLayer>> decoder;
  std::shared_ptr<PredictionHeads> heads;

  /// Raw (pre-projection) query positional code for the configured variant.
  Tensor query_position(const Tensor& anchors, const Tensor& depth_logits) const;

 private:
  Tensor depth_positions(const Tensor& depth_logits, Index n, Index h, Index w) const;

  ModelConfig cfg_;
  std::vector<double> edges_;
};

/// Per-pixel foreground depth in meters (center of the arg-max foreground
/// bin) and the arg-max class over all k+1 classes.
struct DepthReadout {
  std::vector<double> meters;
  std::vector<Index> bin;
};
DepthReadout read_depth_map(const Tensor& depth_logits, Index batch, const std::vector<double>& edges);

struct DecodeOptions {
  double score_threshold = 0.05;
  Index max_detections = 50;
};

struct DecodeStats {
  Index dropped_nonpositive_depth = 0;
};

/// Back-projects the (x_c, y_c) center at depth mu through P and completes the
/// box. Location is the bottom center: y of the gravity center plus h/2.
geo::Box3D back_project(double u, double v, double depth, const double dims[3], double alpha,
                        const geo::CameraCalib& calib);

/// Detections for image `batch`, sorted by descending score. Score is the best
/// class probability times exp(-sigma).
std::vector<geo::KittiObject> decode_to_boxes(const Predictions& pred, Index batch, const geo::CameraCalib& calib,
                                              const DecodeOptions& opts = {}, DecodeStats* stats = nullptr);

}  // namespace mdnx
