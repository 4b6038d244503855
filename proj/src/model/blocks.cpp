#include "mdnx/model/blocks.hpp"

namespace mdnx {

Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::kGelu:
      return gelu(x);
    case Activation::kSilu:
      return silu(x);
    case Activation::kNone:
      break;
  }
  return x;
}

ConvBnAct::ConvBnAct(Index in, Index out, Index kernel, Conv2dArgs args, Activation a, Rng& rng) : act(a) {
  conv = register_module("conv", std::make_shared<Conv2d>(in, out, kernel, args, rng, false));
  bn = register_module("bn", std::make_shared<BatchNorm2d>(out));
}

Tensor ConvBnAct::forward(const Tensor& x) { return activate(bn->forward(conv->forward(x)), act); }

EncoderLayer::EncoderLayer(Index dim, Index heads, Index ffn_dim, Rng& rng) {
  attn = register_module("attn", std::make_shared<MultiHeadAttention>(dim, heads, rng));
  norm1 = register_module("norm1", std::make_shared<LayerNorm>(dim));
  ffn = register_module("ffn", std::make_shared<Mlp>(dim, ffn_dim, dim, rng));
  norm2 = register_module("norm2", std::make_shared<LayerNorm>(dim));
}

Tensor EncoderLayer::forward(const Tensor& x, const Tensor& pos) {
  const Tensor qk = pos.defined() ? x + pos : x;
  Tensor h = norm1->forward(x + attn->forward(qk, qk, x));
  return norm2->forward(h + ffn->forward(h));
}

Tensor inverse_sigmoid(const Tensor& x, Real eps) {
  const Tensor c = clamp(x, eps, 1 - eps);
  return log(c / (1 - c));
}

}  // namespace mdnx
