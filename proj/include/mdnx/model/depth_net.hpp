#pragma once

#include <memory>
#include <vector>

#include "mdnx/model/blocks.hpp"
#include "mdnx/model/config.hpp"

namespace mdnx {

/// conv3 -> BN -> GELU -> conv3 on f_v; shape preserving.
class LightDepth : public Module {
 public:
  LightDepth(Index dim, Rng& rng);
  Tensor forward(const Tensor& fv);
  static Index parameter_count_for(Index dim) { return 2 * (dim * dim * 9) + 2 * dim + 2 * dim; }

  std::shared_ptr<Conv2d> conv1, conv2;
  std::shared_ptr<BatchNorm2d> bn;
};

/// X + GELU(BN(Conv_r(X))) with a bias-free dilated 3x3 conv. With
/// `pointwise`, two 1x1 convs (C -> 2C -> C) follow the activation.
class SdcBlock : public Module {
 public:
  SdcBlock(Index channels, Index dilation, bool pointwise, Rng& rng);
  Tensor forward(const Tensor& x);
  static Index parameter_count_for(Index channels, bool pointwise);

  std::shared_ptr<Conv2d> conv;
  std::shared_ptr<BatchNorm2d> bn;
  std::shared_ptr<Conv2d> pw1, pw2;
  Index dilation;
};

/// Cross-covariance attention over channels followed by
/// out = X + GELU(LN(attn(X) + X)). `weights` receives [N, heads, d, d].
/// With `pointwise`, two 1x1 convs (C -> 2C -> C) follow the activation.
class RgfiBlock : public Module {
 public:
  RgfiBlock(Index channels, Index heads, bool pointwise, Rng& rng);
  Tensor forward(const Tensor& x, Tensor* weights = nullptr);

  std::shared_ptr<Linear> q, k, v;
  Tensor temperature;  // [heads]
  std::shared_ptr<LayerNorm> norm;
  std::shared_ptr<Conv2d> pw1, pw2;
  Index heads;
};

/// Image -> f_D [N, C, H/16, W/16] through a stem and three SDC/RGFI stages.
class AccurateDepth : public Module {
 public:
  AccurateDepth(const ModelConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& image);

  std::vector<std::shared_ptr<ConvBnAct>> stem;
  std::vector<std::shared_ptr<ConvBnAct>> down;
  std::vector<std::vector<std::shared_ptr<SdcBlock>>> sdc;
  std::vector<std::shared_ptr<RgfiBlock>> rgfi;
  std::shared_ptr<Conv2d> proj;
};

/// Dilations (1, 2, 3, 1, 2, ...) for a stage of `count` SDC blocks.
std::vector<Index> sdc_dilations(Index count);

}  // namespace mdnx
