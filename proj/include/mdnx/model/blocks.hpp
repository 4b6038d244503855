#pragma once

#include <memory>

#include "mdnx/core/nn.hpp"

namespace mdnx {

enum class Activation { kNone, kGelu, kSilu };
Tensor activate(const Tensor& x, Activation a);

/// 3x3 (or k x k) convolution without bias, batch norm, activation.
class ConvBnAct : public Module {
 public:
  ConvBnAct(Index in, Index out, Index kernel, Conv2dArgs args, Activation act, Rng& rng);
  Tensor forward(const Tensor& x);

  std::shared_ptr<Conv2d> conv;
  std::shared_ptr<BatchNorm2d> bn;
  Activation act;
};

/// Post-norm transformer encoder layer over [N, L, C] tokens. `pos` is added
/// to queries and keys only.
class EncoderLayer : public Module {
 public:
  EncoderLayer(Index dim, Index heads, Index ffn, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& pos);

  std::shared_ptr<MultiHeadAttention> attn;
  std::shared_ptr<LayerNorm> norm1, norm2;
  std::shared_ptr<Mlp> ffn;
};

/// Inverse sigmoid with the argument clamped to [eps, 1 - eps].
Tensor inverse_sigmoid(const Tensor& x, Real eps = Real(1e-5));

}  // namespace mdnx
