#include "mdnx/model/depth_net.hpp"

namespace mdnx {

namespace {

constexpr Index kRgfiHeads = 8;

}  // namespace

LightDepth::LightDepth(Index dim, Rng& rng) {
  conv1 = register_module("conv1", std::make_shared<Conv2d>(dim, dim, 3, Conv2dArgs{1, 1, 1}, rng));
  bn = register_module("bn", std::make_shared<BatchNorm2d>(dim));
  conv2 = register_module("conv2", std::make_shared<Conv2d>(dim, dim, 3, Conv2dArgs{1, 1, 1}, rng));
}

Tensor LightDepth::forward(const Tensor& fv) { return conv2->forward(gelu(bn->forward(conv1->forward(fv)))); }

SdcBlock::SdcBlock(Index channels, Index r, bool pointwise, Rng& rng) : dilation(r) {
  conv = register_module("conv", std::make_shared<Conv2d>(channels, channels, 3, Conv2dArgs{1, r, r}, rng, false));
  bn = register_module("bn", std::make_shared<BatchNorm2d>(channels));
  if (pointwise) {
    pw1 = register_module("pw1", std::make_shared<Conv2d>(channels, 2 * channels, 1, Conv2dArgs{}, rng));
    pw2 = register_module("pw2", std::make_shared<Conv2d>(2 * channels, channels, 1, Conv2dArgs{}, rng));
  }
}

Tensor SdcBlock::forward(const Tensor& x) {
  Tensor h = gelu(bn->forward(conv->forward(x)));
  if (pw1) h = pw2->forward(gelu(pw1->forward(h)));
  return x + h;
}

Index SdcBlock::parameter_count_for(Index c, bool pointwise) {
  Index n = 9 * c * c + 2 * c;
  if (pointwise) n += (2 * c * c + 2 * c) + (2 * c * c + c);
  return n;
}

RgfiBlock::RgfiBlock(Index channels, Index h, bool pointwise, Rng& rng) : heads(h) {
  if (h <= 0 || channels % h != 0) {
    throw ConfigError("RGFI channels (" + std::to_string(channels) + ") must be divisible by heads (" +
                      std::to_string(h) + ")");
  }
  q = register_module("q", std::make_shared<Linear>(channels, channels, rng));
  k = register_module("k", std::make_shared<Linear>(channels, channels, rng));
  v = register_module("v", std::make_shared<Linear>(channels, channels, rng));
  temperature = register_parameter("temperature", Tensor::full({h}, 1));
  norm = register_module("norm", std::make_shared<LayerNorm>(channels));
  if (pointwise) {
    pw1 = register_module("pw1", std::make_shared<Conv2d>(channels, 2 * channels, 1, Conv2dArgs{}, rng));
    pw2 = register_module("pw2", std::make_shared<Conv2d>(2 * channels, channels, 1, Conv2dArgs{}, rng));
  }
}

Tensor RgfiBlock::forward(const Tensor& x, Tensor* weights) {
  const Index n = x.size(0), c = x.size(1), hh = x.size(2), ww = x.size(3);
  const Index d = c / heads;
  const Tensor tokens = to_tokens(x);  // [N, T, C]
  // Per head: [N*heads, T, d], normalized along tokens.
  const Tensor qh = l2_normalize(split_heads(q->forward(tokens), heads), 1);
  const Tensor kh = l2_normalize(split_heads(k->forward(tokens), heads), 1);
  const Tensor vh = split_heads(v->forward(tokens), heads);
  Tensor logits = reshape(bmm(transpose(qh, 1, 2), kh), {n, heads, d, d});
  logits = logits * reshape(temperature, {1, heads, 1, 1});
  const Tensor attn = softmax(logits, 3);
  if (weights) *weights = attn;
  // out^T = attn V^T -> [N*heads, d, T]
  const Tensor out = bmm(reshape(attn, {n * heads, d, d}), transpose(vh, 1, 2));
  const Tensor mixed = merge_heads(transpose(out, 1, 2), heads);  // [N, T, C]
  Tensor y = gelu(norm->forward(mixed + tokens));
  Tensor h = from_tokens(y, hh, ww);
  if (pw1) h = pw2->forward(gelu(pw1->forward(h)));
  return x + h;
}

std::vector<Index> sdc_dilations(Index count) {
  std::vector<Index> out;
  for (Index i = 0; i < count; ++i) out.push_back(1 + i % 3);
  return out;
}

AccurateDepth::AccurateDepth(const ModelConfig& cfg, Rng& rng) {
  const auto ch = cfg.channels();
  stem.push_back(
      register_module("stem0", std::make_shared<ConvBnAct>(3, ch[0], 3, Conv2dArgs{2, 1, 1}, Activation::kGelu, rng)));
  for (int i = 1; i <= 2; ++i)
    stem.push_back(register_module("stem" + std::to_string(i),
                                   std::make_shared<ConvBnAct>(ch[0], ch[0], 3, Conv2dArgs{1, 1, 1},
                                                               Activation::kGelu, rng)));
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string tag = "stage" + std::to_string(s + 1);
    const Index in = ch[s] + 3;
    const Index out = ch[s + 1];
    down.push_back(register_module(
        tag + "_down", std::make_shared<ConvBnAct>(in, out, 3, Conv2dArgs{2, 1, 1}, Activation::kGelu, rng)));
    std::vector<std::shared_ptr<SdcBlock>> blocks;
    const auto rates = sdc_dilations(cfg.sdc_counts[s]);
    for (std::size_t b = 0; b < rates.size(); ++b)
      blocks.push_back(register_module(tag + "_sdc" + std::to_string(b),
                                       std::make_shared<SdcBlock>(out, rates[b], cfg.sdc_pointwise, rng)));
    sdc.push_back(std::move(blocks));
    rgfi.push_back(
        register_module(tag + "_rgfi", std::make_shared<RgfiBlock>(out, kRgfiHeads, cfg.rgfi_pointwise, rng)));
  }
  proj = register_module("proj", std::make_shared<Conv2d>(ch[3], cfg.dim, 1, Conv2dArgs{}, rng));
}

Tensor AccurateDepth::forward(const Tensor& image) {
  if (image.dim() != 4 || image.size(2) % 16 != 0 || image.size(3) % 16 != 0) {
    throw ConfigError("accurate depth needs H and W divisible by 16, got " + shape_str(image.shape()));
  }
  Tensor x = image;
  for (auto& s : stem) x = s->forward(x);
  Index factor = 2;
  for (std::size_t s = 0; s < 3; ++s) {
    x = down[s]->forward(concat({x, avg_pool2d(image, factor)}, 1));
    for (auto& b : sdc[s]) x = b->forward(x);
    x = rgfi[s]->forward(x);
    factor *= 2;
  }
  return proj->forward(x);
}

}  // namespace mdnx
