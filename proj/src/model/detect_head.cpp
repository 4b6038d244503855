#include "mdnx/model/detect_head.hpp"

#include <algorithm>
#include <numeric>

namespace mdnx {

namespace {

constexpr Real kPriorSize = 0.1;

/// Broadcasts a [1, Q, D] tensor over the batch.
Tensor expand_batch(const Tensor& x, Index n) {
  return x + Tensor::zeros({n, x.size(1), x.size(2)});
}

Tensor grid_prior(Index h, Index w, bool with_size) {
  std::vector<Real> v;
  for (const auto& c : grid_centers(h, w)) {
    v.push_back(static_cast<Real>(c[0]));
    v.push_back(static_cast<Real>(c[1]));
    if (with_size) {
      v.push_back(kPriorSize);
      v.push_back(kPriorSize);
    }
  }
  return Tensor::from_data({1, h * w, with_size ? 4 : 2}, std::move(v));
}

}  // namespace

std::vector<Index> top_k_indices(std::span<const Real> values, Index count) {
  std::vector<Index> idx(values.size());
  std::iota(idx.begin(), idx.end(), Index{0});
  count = std::min<Index>(count, static_cast<Index>(idx.size()));
  std::partial_sort(idx.begin(), idx.begin() + count, idx.end(), [&](Index a, Index b) {
    const Real va = values[static_cast<std::size_t>(a)], vb = values[static_cast<std::size_t>(b)];
    return va > vb || (va == vb && a < b);
  });
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

AnchorGenerator::AnchorGenerator(const ModelConfig& cfg, Rng& rng) : strategy(cfg.strategy), queries(cfg.queries) {
  const Index c = cfg.dim;
  const bool enc_center = uses_enc_center(strategy);
  const bool enc_box = uses_enc_box(strategy);
  if (strategy == QueryStrategy::kLCenter) {
    std::vector<Real> e(static_cast<std::size_t>(queries * c));
    for (auto& x : e) x = static_cast<Real>(rng.normal());
    query_embed = register_parameter("query_embed", Tensor::from_data({queries, c}, std::move(e)));
  } else {
    objectness = register_module("objectness", std::make_shared<Linear>(c, 1, rng));
    content_proj = register_module("content_proj", std::make_shared<Linear>(c, c, rng));
  }
  if (enc_box) box_head = register_module("box_head", std::make_shared<Mlp>(c, c, 4, rng));
  if (enc_center) {
    depth_attn = register_module("depth_attn", std::make_shared<MultiHeadAttention>(c, cfg.decoder_heads, rng));
    center_head = register_module("center_head", std::make_shared<Mlp>(c, c, 2, rng));
  }
  if (!(enc_center && enc_box)) {
    std::vector<Real> a;
    for (Index q = 0; q < queries; ++q) {
      const double xc = rng.uniform(0.1, 0.9), yc = rng.uniform(0.1, 0.9);
      for (double p : {xc, yc, xc, yc, double(kPriorSize), double(kPriorSize)})
        a.push_back(static_cast<Real>(std::log(p / (1 - p))));
    }
    anchor_logits = register_parameter("anchor_logits", Tensor::from_data({queries, 6}, std::move(a)));
  }
}

QuerySet AnchorGenerator::forward(const Tensor& fv, const Tensor& fd, const Tensor& fv_pos, const Tensor& fd_pos,
                                  Index grid_h, Index grid_w, EncoderProposals* enc) {
  const Index n = fv.size(0), t = fv.size(1);
  if (t != grid_h * grid_w || fd.shape() != fv.shape()) {
    throw DimensionError("anchor generator expects matching f_v/f_D tokens, got " + shape_str(fv.shape()) + " and " +
                         shape_str(fd.shape()));
  }
  if (queries > t) {
    throw ConfigError("query.count (" + std::to_string(queries) + ") exceeds the token count (" +
                      std::to_string(t) + ")");
  }
  const bool enc_center = uses_enc_center(strategy);
  const bool enc_box = uses_enc_box(strategy);
  QuerySet qs;
  const Tensor learned = anchor_logits.defined() ? expand_batch(reshape(sigmoid(anchor_logits), {1, queries, 6}), n)
                                                 : Tensor();

  if (strategy == QueryStrategy::kLCenter) {
    qs.content = expand_batch(reshape(query_embed, {1, queries, query_embed.size(1)}), n);
    qs.anchors = learned;
    if (enc) *enc = EncoderProposals{Tensor(), qs.anchors, false, false};
    return qs;
  }

  const Tensor obj = objectness->forward(fv);  // [N, T, 1]
  const auto obj_values = obj.data();
  for (Index b = 0; b < n; ++b)
    qs.origin.push_back(top_k_indices(obj_values.subspan(static_cast<std::size_t>(b * t), static_cast<std::size_t>(t)),
                                      queries));

  Tensor center, box;
  if (enc_center) {
    const Tensor attended = depth_attn->forward(fv + fv_pos, fd + fd_pos, fd);
    const Tensor dense = sigmoid(center_head->forward(attended) + inverse_sigmoid(grid_prior(grid_h, grid_w, false)));
    center = gather_rows(dense, qs.origin);
  } else {
    center = slice(learned, 2, 0, 2);
  }
  if (enc_box) {
    const Tensor dense = sigmoid(box_head->forward(fv) + inverse_sigmoid(grid_prior(grid_h, grid_w, true)));
    box = gather_rows(dense, qs.origin);
  } else {
    box = slice(learned, 2, 2, 4);
  }
  qs.anchors = concat({center, box}, 2);
  qs.content = content_proj->forward(gather_rows(fv, qs.origin));
  if (enc) {
    enc->objectness = reshape(gather_rows(obj, qs.origin), {n, queries});
    enc->anchors = qs.anchors;
    enc->supervise_center = enc_center;
    enc->supervise_box = enc_box;
  }
  return qs;
}

DecoderLayer::DecoderLayer(const ModelConfig& cfg, Rng& rng) {
  const Index c = cfg.dim, h = cfg.decoder_heads;
  self_attn = register_module("self_attn", std::make_shared<MultiHeadAttention>(c, h, rng));
  norm1 = register_module("norm1", std::make_shared<LayerNorm>(c));
  depth_attn = register_module("depth_attn", std::make_shared<MultiHeadAttention>(c, h, rng));
  norm2 = register_module("norm2", std::make_shared<LayerNorm>(c));
  visual_attn = register_module("visual_attn", std::make_shared<MultiHeadAttention>(c, h, rng));
  norm3 = register_module("norm3", std::make_shared<LayerNorm>(c));
  ffn = register_module("ffn", std::make_shared<Mlp>(c, cfg.decoder_ffn, c, rng));
  norm4 = register_module("norm4", std::make_shared<LayerNorm>(c));
  delta = register_module("delta", std::make_shared<Mlp>(c, c, 6, rng));
  std::fill(delta->fc2->weight.mutable_data().begin(), delta->fc2->weight.mutable_data().end(), Real(0));
}

DecoderLayer::Output DecoderLayer::forward(const Tensor& content, const Tensor& anchors, const Tensor& query_pos,
                                           const Tensor& fd, const Tensor& fd_pos, const Tensor& fv,
                                           const Tensor& fv_pos) {
  Output out;
  Tensor x = content;
  Tensor q = x + query_pos;
  x = norm1->forward(x + self_attn->forward(q, q, x));
  x = norm2->forward(x + depth_attn->forward(x + query_pos, fd + fd_pos, fd));
  x = norm3->forward(x + visual_attn->forward(x + query_pos, fv + fv_pos, fv, &out.visual_weights));
  x = norm4->forward(x + ffn->forward(x));
  out.content = x;
  out.anchors = sigmoid(inverse_sigmoid(anchors) + delta->forward(x));
  return out;
}

PredictionHeads::PredictionHeads(Index dim, Index classes, Rng& rng) {
  cls = register_module("cls", std::make_shared<Linear>(dim, classes, rng));
  depth = register_module("depth", std::make_shared<Mlp>(dim, dim, 2, rng));
  dims = register_module("dims", std::make_shared<Mlp>(dim, dim, 3, rng));
  angle = register_module("angle", std::make_shared<Mlp>(dim, dim, 2, rng));
}

Predictions PredictionHeads::forward(const Tensor& content, const Tensor& anchors) const {
  Predictions p;
  const Index n = content.size(0), q = content.size(1);
  p.logits = cls->forward(content);
  p.box6 = anchors;
  const Tensor d = depth->forward(content);
  p.depth = reshape(exp(clamp(slice(d, 2, 0, 1), -5, 3)) * Real(kDepthScale), {n, q});
  p.log_sigma = reshape(clamp(slice(d, 2, 1, 1), -5, 5), {n, q});
  const Tensor prior = Tensor::from_data({1, 1, 3}, {Real(kDimPrior[0]), Real(kDimPrior[1]), Real(kDimPrior[2])});
  p.dims = exp(clamp(dims->forward(content), -3, 3)) * prior;
  p.angle = l2_normalize(angle->forward(content), 2, Real(1e-8));
  return p;
}

}  // namespace mdnx
