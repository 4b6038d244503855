#include "mdnx/model/model.hpp"

#include <algorithm>
#include <cmath>

namespace mdnx {

namespace {

bool is_table(PosEmbedKind k) { return k == PosEmbedKind::kMeterWise || k == PosEmbedKind::kKBin; }

Index table_rows(PosEmbedKind k, const ModelConfig& cfg) {
  return k == PosEmbedKind::kMeterWise ? static_cast<Index>(std::ceil(cfg.depth_max)) + 1 : cfg.depth_bins + 1;
}

Index table_index(PosEmbedKind k, const DepthReadout& r, std::size_t cell) {
  return k == PosEmbedKind::kMeterWise ? static_cast<Index>(std::lround(r.meters[cell])) : r.bin[cell];
}

}  // namespace

Detector::Detector(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  edges_ = lid_edges(cfg_.depth_bins, cfg_.depth_min, cfg_.depth_max);
  Rng rng(seed);
  const Index c = cfg_.dim;
  backbone = register_module("backbone", std::make_shared<Backbone>(cfg_, rng));
  encoder = register_module("encoder", std::make_shared<VisionEncoder>(cfg_, rng));
  if (cfg_.depth == DepthVariant::kE)
    light_depth = register_module("depth", std::make_shared<LightDepth>(c, rng));
  else
    accurate_depth = register_module("depth", std::make_shared<AccurateDepth>(cfg_, rng));
  depth_head = register_module("depth_head", std::make_shared<Conv2d>(c, cfg_.depth_bins + 1, 1, Conv2dArgs{}, rng));
  if (is_table(cfg_.depth_pos_embed))
    depth_pos_table = register_module(
        "depth_pos", std::make_shared<EmbeddingTable>(table_rows(cfg_.depth_pos_embed, cfg_), c, rng));
  anchors = register_module("anchors", std::make_shared<AnchorGenerator>(cfg_, rng));
  if (is_table(cfg_.query_pos_embed))
    query_pos_table = register_module(
        "query_pos", std::make_shared<EmbeddingTable>(table_rows(cfg_.query_pos_embed, cfg_), c, rng));
  query_pos_proj = register_module("query_pos_proj", std::make_shared<Mlp>(c, c, c, rng));
  for (Index i = 0; i < cfg_.decoder_layers; ++i)
    decoder.push_back(register_module("decoder" + std::to_string(i), std::make_shared<DecoderLayer>(cfg_, rng)));
  heads = register_module("heads", std::make_shared<PredictionHeads>(c, cfg_.classes, rng));
}

Tensor Detector::depth_positions(const Tensor& depth_logits, Index n, Index h, Index w) const {
  if (!is_table(cfg_.depth_pos_embed)) return grid_sincos(h, w, cfg_.dim);
  std::vector<std::vector<Index>> idx(static_cast<std::size_t>(n));
  for (Index b = 0; b < n; ++b) {
    const DepthReadout r = read_depth_map(depth_logits, b, edges_);
    for (std::size_t cell = 0; cell < r.bin.size(); ++cell)
      idx[static_cast<std::size_t>(b)].push_back(table_index(cfg_.depth_pos_embed, r, cell));
  }
  return depth_pos_table->forward(idx);
}

Tensor Detector::query_position(const Tensor& anchor_values, const Tensor& depth_logits) const {
  const Index n = anchor_values.size(0), q = anchor_values.size(1);
  const auto a = anchor_values.data();
  auto at = [&](Index b, Index i, Index j) { return static_cast<double>(a[static_cast<std::size_t>((b * q + i) * 6 + j)]); };
  switch (cfg_.query_pos_embed) {
    case PosEmbedKind::kSinCos3d:
    case PosEmbedKind::kSinCos2d: {
      const Index k = cfg_.query_pos_embed == PosEmbedKind::kSinCos3d ? 6 : 2;
      std::vector<std::vector<double>> coords;
      for (Index b = 0; b < n; ++b)
        for (Index i = 0; i < q; ++i) {
          std::vector<double> row;
          for (Index j = 0; j < k; ++j) row.push_back(at(b, i, j));
          coords.push_back(std::move(row));
        }
      return reshape(sincos_embed(coords, cfg_.dim), {n, q, cfg_.dim});
    }
    case PosEmbedKind::kMeterWise:
    case PosEmbedKind::kKBin:
      break;
  }
  const Index h = depth_logits.size(2), w = depth_logits.size(3);
  std::vector<std::vector<Index>> idx(static_cast<std::size_t>(n));
  for (Index b = 0; b < n; ++b) {
    const DepthReadout r = read_depth_map(depth_logits, b, edges_);
    for (Index i = 0; i < q; ++i) {
      const Index cx = std::clamp<Index>(static_cast<Index>(std::floor(at(b, i, 0) * w)), 0, w - 1);
      const Index cy = std::clamp<Index>(static_cast<Index>(std::floor(at(b, i, 1) * h)), 0, h - 1);
      idx[static_cast<std::size_t>(b)].push_back(
          table_index(cfg_.query_pos_embed, r, static_cast<std::size_t>(cy * w + cx)));
    }
  }
  return query_pos_table->forward(idx);
}

ModelOutput Detector::forward(const Tensor& images) {
  ModelOutput out;
  const FeaturePyramid pyramid = backbone->forward(images);
  out.fv = encoder->forward(pyramid);
  out.fd = light_depth ? light_depth->forward(out.fv) : accurate_depth->forward(images);
  out.depth_logits = depth_head->forward(out.fd);
  const Index n = out.fv.size(0);
  out.grid_h = out.fv.size(2);
  out.grid_w = out.fv.size(3);

  const Tensor fv = to_tokens(out.fv);
  const Tensor fd = to_tokens(out.fd);
  const Tensor fv_pos = grid_sincos(out.grid_h, out.grid_w, cfg_.dim);
  const Tensor fd_pos = depth_positions(out.depth_logits, n, out.grid_h, out.grid_w);

  out.initial = anchors->forward(fv, fd, fv_pos, fd_pos, out.grid_h, out.grid_w, &out.enc);
  Tensor content = out.initial.content;
  Tensor anchor = out.initial.anchors;
  for (auto& layer : decoder) {
    const Tensor pos = query_pos_proj->forward(query_position(anchor.detach(), out.depth_logits));
    DecoderLayer::Output step = layer->forward(content, anchor, pos, fd, fd_pos, fv, fv_pos);
    content = step.content;
    anchor = step.anchors;
    out.visual_weights = step.visual_weights;
    out.layers.push_back(heads->forward(content, anchor));
  }
  return out;
}

DepthReadout read_depth_map(const Tensor& depth_logits, Index batch, const std::vector<double>& edges) {
  const Index classes = depth_logits.size(1), h = depth_logits.size(2), w = depth_logits.size(3);
  const Index k = classes - 1;
  const auto v = depth_logits.data();
  DepthReadout r;
  const Index hw = h * w;
  for (Index p = 0; p < hw; ++p) {
    auto value = [&](Index c) { return v[static_cast<std::size_t>((batch * classes + c) * hw + p)]; };
    Index best = 0, best_fg = 0;
    for (Index c = 1; c < classes; ++c) {
      if (value(c) > value(best)) best = c;
      if (c < k && value(c) > value(best_fg)) best_fg = c;
    }
    r.bin.push_back(best);
    r.meters.push_back(bin_center(best_fg, edges));
  }
  return r;
}

geo::Box3D back_project(double u, double v, double depth, const double dims[3], double alpha,
                        const geo::CameraCalib& calib) {
  // Solve P [x y z 1]^T ~ [u v 1]^T for x, y at fixed z.
  const auto& P = calib.P;
  Eigen::Matrix2d a;
  a << P(0, 0) - u * P(2, 0), P(0, 1) - u * P(2, 1), P(1, 0) - v * P(2, 0), P(1, 1) - v * P(2, 1);
  Eigen::Vector2d rhs;
  rhs << (u * P(2, 2) - P(0, 2)) * depth + u * P(2, 3) - P(0, 3), (v * P(2, 2) - P(1, 2)) * depth + v * P(2, 3) - P(1, 3);
  const Eigen::Vector2d xy = a.partialPivLu().solve(rhs);
  geo::Box3D box;
  box.h = dims[0];
  box.w = dims[1];
  box.l = dims[2];
  box.location = geo::Vec3(xy(0), xy(1) + box.h / 2, depth);
  box.yaw = geo::yaw_from_alpha(alpha, box.location);
  return box;
}

std::vector<geo::KittiObject> decode_to_boxes(const Predictions& pred, Index batch, const geo::CameraCalib& calib,
                                              const DecodeOptions& opts, DecodeStats* stats) {
  const Index q = pred.logits.size(1), classes = pred.logits.size(2);
  const auto logits = pred.logits.data();
  const auto box6 = pred.box6.data();
  const auto depth = pred.depth.data();
  const auto log_sigma = pred.log_sigma.data();
  const auto dims = pred.dims.data();
  const auto angle = pred.angle.data();
  std::vector<geo::KittiObject> out;
  for (Index i = 0; i < q; ++i) {
    const Index row = batch * q + i;
    Index best = 0;
    for (Index c = 1; c < classes; ++c)
      if (logits[static_cast<std::size_t>(row * classes + c)] > logits[static_cast<std::size_t>(row * classes + best)])
        best = c;
    const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[static_cast<std::size_t>(row * classes + best)])));
    const double sigma = std::exp(static_cast<double>(log_sigma[static_cast<std::size_t>(row)]));
    const double score = prob * std::exp(-sigma);
    const double mu = depth[static_cast<std::size_t>(row)];
    if (!(mu > 0)) {
      if (stats) ++stats->dropped_nonpositive_depth;
      continue;
    }
    if (score < opts.score_threshold) continue;
    auto b6 = [&](Index j) { return static_cast<double>(box6[static_cast<std::size_t>(row * 6 + j)]); };
    const double d3[3] = {static_cast<double>(dims[static_cast<std::size_t>(row * 3)]),
                          static_cast<double>(dims[static_cast<std::size_t>(row * 3 + 1)]),
                          static_cast<double>(dims[static_cast<std::size_t>(row * 3 + 2)])};
    const double alpha = std::atan2(static_cast<double>(angle[static_cast<std::size_t>(row * 2)]),
                                    static_cast<double>(angle[static_cast<std::size_t>(row * 2 + 1)]));
    geo::KittiObject obj;
    const double u = b6(0) * calib.width, v = b6(1) * calib.height;
    obj.box = back_project(u, v, mu, d3, alpha, calib);
    obj.box.category = static_cast<int>(best);
    obj.box.score = score;
    obj.type = geo::category_name(static_cast<int>(best));
    obj.alpha = alpha;
    const double bx = b6(2) * calib.width, by = b6(3) * calib.height;
    const double bw = b6(4) * calib.width, bh = b6(5) * calib.height;
    obj.bbox.x_min = std::max(0.0, bx - bw / 2);
    obj.bbox.y_min = std::max(0.0, by - bh / 2);
    obj.bbox.x_max = std::min<double>(calib.width, bx + bw / 2);
    obj.bbox.y_max = std::min<double>(calib.height, by + bh / 2);
    obj.bbox.xc = u;
    obj.bbox.yc = v;
    out.push_back(std::move(obj));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const geo::KittiObject& a, const geo::KittiObject& b) { return *a.box.score > *b.box.score; });
  if (static_cast<Index>(out.size()) > opts.max_detections) out.resize(static_cast<std::size_t>(opts.max_detections));
  return out;
}

}  // namespace mdnx
