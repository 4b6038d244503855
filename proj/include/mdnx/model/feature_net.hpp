#pragma once

#include <memory>
#include <vector>

#include "mdnx/model/blocks.hpp"
#include "mdnx/model/config.hpp"

namespace mdnx {

struct FeaturePyramid {
  Tensor s3, s4, s5;  // [N, C, H/8 | H/16 | H/32, ...]
};

/// Stem conv (stride 2) followed by four [conv s2, conv s1] stages; the last
/// three stages feed 1x1 projections to the model dim.
class Backbone : public Module {
 public:
  Backbone(const ModelConfig& cfg, Rng& rng);
  FeaturePyramid forward(const Tensor& image);

  /// Closed-form parameter count for a configuration.
  static Index parameter_count_for(const ModelConfig& cfg);

  std::shared_ptr<ConvBnAct> stem;
  std::vector<std::shared_ptr<ConvBnAct>> down, refine;
  std::vector<std::shared_ptr<Conv2d>> proj;
};

/// Adjacent-scale fusion: concat -> conv3 -> BN -> act -> conv3 -> BN, plus a
/// 1x1 residual projection of the concatenation when `residual` is set, then act.
class FusionBlock : public Module {
 public:
  FusionBlock(Index in, Index out, bool residual, Activation act, Rng& rng);
  Tensor forward(const std::vector<Tensor>& parts);

  std::shared_ptr<ConvBnAct> conv1, conv2;
  std::shared_ptr<Conv2d> shortcut;
  Activation act;
};

/// Top-down (F5 -> S4 -> S3) then bottom-up (P3 -> P4) fusion; output at H/16.
class Cfim : public Module {
 public:
  Cfim(Index dim, bool residual, Activation act, Rng& rng);
  Tensor forward(const Tensor& s3, const Tensor& s4, const Tensor& f5);

  std::shared_ptr<FusionBlock> top_down4, top_down3, bottom_up4;
  std::shared_ptr<ConvBnAct> downsample;
};

/// Encoder variants behind one interface: returns f_v [N, C, H/16, W/16].
class VisionEncoder : public Module {
 public:
  VisionEncoder(const ModelConfig& cfg, Rng& rng);
  Tensor forward(const FeaturePyramid& p);
  /// Transformer layer applied to S5 tokens (hybrid, hybrid-L and rt).
  Tensor encode_s5(const Tensor& s5);

  EncoderVariant variant;
  std::shared_ptr<EncoderLayer> s5_layer;
  std::shared_ptr<Cfim> cfim;
  std::shared_ptr<FusionBlock> single_fusion;          // hybrid-L
  std::vector<std::shared_ptr<EncoderLayer>> layers;   // monodetr
  Tensor level_embed;                                   // monodetr, [3, C]
};

}  // namespace mdnx
