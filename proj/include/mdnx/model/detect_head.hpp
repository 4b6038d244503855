#pragma once

#include <memory>
#include <vector>

#include "mdnx/model/blocks.hpp"
#include "mdnx/model/config.hpp"
#include "mdnx/model/pos_embed.hpp"

namespace mdnx {

/// Anchors are [x_c, y_c, x, y, w, h] in normalized image coordinates.
struct QuerySet {
  Tensor anchors;  // [N, Q, 6]
  Tensor content;  // [N, Q, C]
  std::vector<std::vector<Index>> origin;  // selected token per query (empty for L-center)
};

/// What the anchor generator exposes for encoder supervision.
struct EncoderProposals {
  Tensor objectness;  // [N, Q] logits of the selected tokens (undefined for L-center)
  Tensor anchors;     // [N, Q, 6] before any decoder layer
  bool supervise_center = false;
  bool supervise_box = false;
};

/// Returns the `count` indices with the largest values, ties to the lower index.
std::vector<Index> top_k_indices(std::span<const Real> values, Index count);

/// Dense-then-select anchor proposals: objectness and (x, y, w, h) from f_v,
/// (x_c, y_c) from attention of f_v over f_D, top-Q by objectness.
class AnchorGenerator : public Module {
 public:
  AnchorGenerator(const ModelConfig& cfg, Rng& rng);
  /// fv, fd: [N, T, C] tokens; fv_pos, fd_pos broadcastable to them.
  QuerySet forward(const Tensor& fv, const Tensor& fd, const Tensor& fv_pos, const Tensor& fd_pos, Index grid_h,
                   Index grid_w, EncoderProposals* enc);

  QueryStrategy strategy;
  Index queries;
  std::shared_ptr<Linear> objectness;
  std::shared_ptr<Mlp> box_head;                 // MLP1
  std::shared_ptr<MultiHeadAttention> depth_attn;
  std::shared_ptr<Mlp> center_head;              // MLP2
  std::shared_ptr<Linear> content_proj;
  Tensor query_embed;   // [Q, C], L-center only
  Tensor anchor_logits; // [Q, 6] learnable parts for L-center strategies
};

/// Self-attention -> depth cross-attention -> visual cross-attention -> FFN,
/// each with residual and post-norm, then anchor refinement
/// a' = sigmoid(logit(a) + delta) from a zero-initialized head.
class DecoderLayer : public Module {
 public:
  DecoderLayer(const ModelConfig& cfg, Rng& rng);

  struct Output {
    Tensor content, anchors;
    Tensor visual_weights;  // [N, heads, Q, T]
  };
  Output forward(const Tensor& content, const Tensor& anchors, const Tensor& query_pos, const Tensor& fd,
                 const Tensor& fd_pos, const Tensor& fv, const Tensor& fv_pos);

  std::shared_ptr<MultiHeadAttention> self_attn, depth_attn, visual_attn;
  std::shared_ptr<LayerNorm> norm1, norm2, norm3, norm4;
  std::shared_ptr<Mlp> ffn, delta;
};

struct Predictions {
  Tensor logits;     // [N, Q, classes]
  Tensor box6;       // [N, Q, 6]
  Tensor depth;      // [N, Q] meters
  Tensor log_sigma;  // [N, Q], clamped to [-5, 5]
  Tensor dims;       // [N, Q, 3] (h, w, l) meters
  Tensor angle;      // [N, Q, 2] normalized (sin, cos) of the observation angle
};

inline constexpr double kDepthScale = 15.0;
inline constexpr double kDimPrior[3] = {1.5, 1.6, 3.9};

class PredictionHeads : public Module {
 public:
  PredictionHeads(Index dim, Index classes, Rng& rng);
  Predictions forward(const Tensor& content, const Tensor& anchors) const;

  std::shared_ptr<Linear> cls;
  std::shared_ptr<Mlp> depth, dims, angle;
};

}  // namespace mdnx
