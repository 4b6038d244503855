#include "mdnx/model/feature_net.hpp"

#include "mdnx/model/pos_embed.hpp"

namespace mdnx {

namespace {

constexpr Conv2dArgs kStride1{1, 1, 1};
constexpr Conv2dArgs kStride2{2, 1, 1};

void require_divisible(const Tensor& x, Index factor, const char* what) {
  if (x.dim() != 4 || x.size(2) % factor != 0 || x.size(3) % factor != 0 || x.size(2) == 0 || x.size(3) == 0) {
    throw ConfigError(std::string(what) + " needs [N, C, H, W] input with H and W divisible by " +
                      std::to_string(factor) + ", got " + shape_str(x.shape()));
  }
}

}  // namespace

Backbone::Backbone(const ModelConfig& cfg, Rng& rng) {
  const auto ch = cfg.channels();
  stem = register_module("stem", std::make_shared<ConvBnAct>(3, ch[0], 3, kStride2, Activation::kGelu, rng));
  Index in = ch[0];
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string tag = "stage" + std::to_string(i + 1);
    down.push_back(
        register_module(tag + "_down", std::make_shared<ConvBnAct>(in, ch[i], 3, kStride2, Activation::kGelu, rng)));
    refine.push_back(register_module(
        tag + "_refine", std::make_shared<ConvBnAct>(ch[i], ch[i], 3, kStride1, Activation::kGelu, rng)));
    in = ch[i];
  }
  for (std::size_t i = 1; i < 4; ++i)
    proj.push_back(register_module("proj" + std::to_string(i + 2),
                                   std::make_shared<Conv2d>(ch[i], cfg.dim, 1, Conv2dArgs{}, rng)));
}

FeaturePyramid Backbone::forward(const Tensor& image) {
  require_divisible(image, 32, "backbone");
  if (image.size(1) != 3) throw DimensionError("backbone expects 3 input channels, got " + shape_str(image.shape()));
  Tensor x = stem->forward(image);
  std::vector<Tensor> stages;
  for (std::size_t i = 0; i < 4; ++i) {
    x = refine[i]->forward(down[i]->forward(x));
    stages.push_back(x);
  }
  return {proj[0]->forward(stages[1]), proj[1]->forward(stages[2]), proj[2]->forward(stages[3])};
}

Index Backbone::parameter_count_for(const ModelConfig& cfg) {
  const auto ch = cfg.channels();
  auto conv_bn = [](Index in, Index out) { return 9 * in * out + 2 * out; };
  Index n = conv_bn(3, ch[0]);
  Index in = ch[0];
  for (std::size_t i = 0; i < 4; ++i) {
    n += conv_bn(in, ch[i]) + conv_bn(ch[i], ch[i]);
    in = ch[i];
  }
  for (std::size_t i = 1; i < 4; ++i) n += ch[i] * cfg.dim + cfg.dim;
  return n;
}

FusionBlock::FusionBlock(Index in, Index out, bool residual, Activation a, Rng& rng) : act(a) {
  conv1 = register_module("conv1", std::make_shared<ConvBnAct>(in, out, 3, kStride1, a, rng));
  conv2 = register_module("conv2", std::make_shared<ConvBnAct>(out, out, 3, kStride1, Activation::kNone, rng));
  if (residual) shortcut = register_module("shortcut", std::make_shared<Conv2d>(in, out, 1, Conv2dArgs{}, rng));
}

Tensor FusionBlock::forward(const std::vector<Tensor>& parts) {
  const Tensor x = parts.size() == 1 ? parts.front() : concat(parts, 1);
  Tensor y = conv2->forward(conv1->forward(x));
  if (shortcut) y = y + shortcut->forward(x);
  return activate(y, act);
}

Cfim::Cfim(Index dim, bool residual, Activation act, Rng& rng) {
  top_down4 = register_module("top_down4", std::make_shared<FusionBlock>(2 * dim, dim, residual, act, rng));
  top_down3 = register_module("top_down3", std::make_shared<FusionBlock>(2 * dim, dim, residual, act, rng));
  downsample = register_module("downsample", std::make_shared<ConvBnAct>(dim, dim, 3, kStride2, act, rng));
  bottom_up4 = register_module("bottom_up4", std::make_shared<FusionBlock>(2 * dim, dim, residual, act, rng));
}

Tensor Cfim::forward(const Tensor& s3, const Tensor& s4, const Tensor& f5) {
  const Index dim = downsample->conv->weight.size(0);
  if (s3.size(1) != dim || s4.size(1) != dim || f5.size(1) != dim) {
    throw ConfigError("CFIM expects " + std::to_string(dim) + " channels on every level, got " +
                      shape_str(s3.shape()) + ", " + shape_str(s4.shape()) + ", " + shape_str(f5.shape()));
  }
  const Tensor p4 = top_down4->forward({upsample_nearest(f5, 2), s4});
  const Tensor p3 = top_down3->forward({upsample_nearest(p4, 2), s3});
  return bottom_up4->forward({downsample->forward(p3), p4});
}

VisionEncoder::VisionEncoder(const ModelConfig& cfg, Rng& rng) : variant(cfg.encoder) {
  const Index c = cfg.dim;
  switch (variant) {
    case EncoderVariant::kHybrid:
      s5_layer = register_module("s5_layer", std::make_shared<EncoderLayer>(c, cfg.encoder_heads, cfg.encoder_ffn, rng));
      cfim = register_module("cfim", std::make_shared<Cfim>(c, true, Activation::kGelu, rng));
      break;
    case EncoderVariant::kRt:
      s5_layer = register_module("s5_layer", std::make_shared<EncoderLayer>(c, cfg.encoder_heads, cfg.encoder_ffn, rng));
      cfim = register_module("cfim", std::make_shared<Cfim>(c, false, Activation::kSilu, rng));
      break;
    case EncoderVariant::kHybridL:
      s5_layer = register_module("s5_layer", std::make_shared<EncoderLayer>(c, cfg.encoder_heads, cfg.encoder_ffn, rng));
      single_fusion =
          register_module("fusion", std::make_shared<FusionBlock>(3 * c, c, true, Activation::kGelu, rng));
      break;
    case EncoderVariant::kMonoDetr: {
      for (int i = 0; i < 3; ++i)
        layers.push_back(register_module("layer" + std::to_string(i),
                                         std::make_shared<EncoderLayer>(c, cfg.encoder_heads, cfg.encoder_ffn, rng)));
      std::vector<Real> v(static_cast<std::size_t>(3 * c));
      for (auto& x : v) x = static_cast<Real>(rng.normal());
      level_embed = register_parameter("level_embed", Tensor::from_data({3, c}, std::move(v)));
      break;
    }
  }
}

Tensor VisionEncoder::encode_s5(const Tensor& s5) {
  const Index h = s5.size(2), w = s5.size(3);
  const Tensor pos = grid_sincos(h, w, s5.size(1));
  return from_tokens(s5_layer->forward(to_tokens(s5), pos), h, w);
}

Tensor VisionEncoder::forward(const FeaturePyramid& p) {
  switch (variant) {
    case EncoderVariant::kHybrid:
    case EncoderVariant::kRt:
      return cfim->forward(p.s3, p.s4, encode_s5(p.s5));
    case EncoderVariant::kHybridL:
      return single_fusion->forward({upsample_nearest(encode_s5(p.s5), 2), p.s4, avg_pool2d(p.s3, 2)});
    case EncoderVariant::kMonoDetr:
      break;
  }
  const Index c = p.s4.size(1);
  const Tensor* levels[3] = {&p.s3, &p.s4, &p.s5};
  std::vector<Tensor> tokens, pos;
  for (Index l = 0; l < 3; ++l) {
    const Tensor& f = *levels[l];
    tokens.push_back(to_tokens(f));
    pos.push_back(grid_sincos(f.size(2), f.size(3), c) + reshape(slice(level_embed, 0, l, 1), {1, 1, c}));
  }
  Tensor x = concat(tokens, 1);
  const Tensor all_pos = concat(pos, 1);
  for (auto& layer : layers) x = layer->forward(x, all_pos);
  const Index t3 = tokens[0].size(1), t4 = tokens[1].size(1);
  return from_tokens(slice(x, 1, t3, t4), p.s4.size(2), p.s4.size(3));
}

}  // namespace mdnx
