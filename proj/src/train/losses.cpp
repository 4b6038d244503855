#include "mdnx/train/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mdnx {

namespace {

constexpr double kProbEps = 1e-7;

std::array<double, 4> box4(const std::array<double, 6>& b) { return {b[2], b[3], b[4], b[5]}; }

double sigmoid_value(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor zero() { return Tensor::scalar(0); }

Tensor column(const Tensor& x, Index c) { return slice(x, 1, c, 1); }

}  // namespace

ImageTargets build_targets(const geo::Annotation& ann, const geo::CameraCalib& calib, Index classes, Index grid_h,
                           Index grid_w, const std::vector<double>& edges) {
  ImageTargets t;
  const double W = calib.width, H = calib.height;
  std::vector<geo::Box2D> boxes;
  for (const auto& obj : ann.objects) {
    const int cat = obj.box.category;
    if (cat < 0 || cat >= classes || !obj.bbox.valid() || obj.box.location.z() <= 0) continue;
    const geo::Vec2 c = geo::project_gravity_center(obj.box, calib);
    ObjectTarget o;
    o.category = cat;
    o.box6 = {c.x() / W,
              c.y() / H,
              0.5 * (obj.bbox.x_min + obj.bbox.x_max) / W,
              0.5 * (obj.bbox.y_min + obj.bbox.y_max) / H,
              obj.bbox.width() / W,
              obj.bbox.height() / H};
    o.depth = obj.box.location.z();
    o.dims = {obj.box.h, obj.box.w, obj.box.l};
    o.sin_alpha = std::sin(obj.alpha);
    o.cos_alpha = std::cos(obj.alpha);
    t.objects.push_back(o);
    boxes.push_back(obj.bbox);
  }
  const Index background = static_cast<Index>(edges.size()) - 1;
  t.depth_labels.assign(static_cast<std::size_t>(grid_h * grid_w), background);
  for (Index gy = 0; gy < grid_h; ++gy)
    for (Index gx = 0; gx < grid_w; ++gx) {
      const double px = (gx + 0.5) * W / grid_w, py = (gy + 0.5) * H / grid_h;
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        if (px < b.x_min || px > b.x_max || py < b.y_min || py > b.y_max) continue;
        if (t.objects[i].depth < nearest) {
          nearest = t.objects[i].depth;
          t.depth_labels[static_cast<std::size_t>(gy * grid_w + gx)] = depth_to_bin(nearest, edges);
        }
      }
    }
  return t;
}

LossWeights default_loss_weights(DepthVariant v) {
  LossWeights w;
  w.dmap = v == DepthVariant::kA ? 1.0 : 0.5;
  return w;
}

double box_iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double iw = std::max(0.0, std::min(a[0] + a[2] / 2, b[0] + b[2] / 2) - std::max(a[0] - a[2] / 2, b[0] - b[2] / 2));
  const double ih = std::max(0.0, std::min(a[1] + a[3] / 2, b[1] + b[3] / 2) - std::max(a[1] - a[3] / 2, b[1] - b[3] / 2));
  const double inter = iw * ih;
  const double uni = a[2] * a[3] + b[2] * b[3] - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double generalized_iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double iou = box_iou(a, b);
  const double iw = std::max(0.0, std::min(a[0] + a[2] / 2, b[0] + b[2] / 2) - std::max(a[0] - a[2] / 2, b[0] - b[2] / 2));
  const double ih = std::max(0.0, std::min(a[1] + a[3] / 2, b[1] + b[3] / 2) - std::max(a[1] - a[3] / 2, b[1] - b[3] / 2));
  const double uni = a[2] * a[3] + b[2] * b[3] - iw * ih;
  const double cw = std::max(a[0] + a[2] / 2, b[0] + b[2] / 2) - std::min(a[0] - a[2] / 2, b[0] - b[2] / 2);
  const double ch = std::max(a[1] + a[3] / 2, b[1] + b[3] / 2) - std::min(a[1] - a[3] / 2, b[1] - b[3] / 2);
  const double area = cw * ch;
  return area > 0 ? iou - (area - uni) / area : iou;
}

double quality_focal_term(double p, double t) {
  p = std::clamp(p, kProbEps, 1 - kProbEps);
  return -(t - p) * (t - p) * (t * std::log(p) + (1 - t) * std::log(1 - p));
}

double focal_term(double p, double alpha, double gamma) {
  p = std::clamp(p, kProbEps, 1.0);
  return -alpha * std::pow(1 - p, gamma) * std::log(p);
}

Tensor generalized_iou(const Tensor& a, const Tensor& b) {
  const Tensor ax1 = column(a, 0) - column(a, 2) * 0.5, ax2 = column(a, 0) + column(a, 2) * 0.5;
  const Tensor ay1 = column(a, 1) - column(a, 3) * 0.5, ay2 = column(a, 1) + column(a, 3) * 0.5;
  const Tensor bx1 = column(b, 0) - column(b, 2) * 0.5, bx2 = column(b, 0) + column(b, 2) * 0.5;
  const Tensor by1 = column(b, 1) - column(b, 3) * 0.5, by2 = column(b, 1) + column(b, 3) * 0.5;
  const Tensor inter = relu(minimum(ax2, bx2) - maximum(ax1, bx1)) * relu(minimum(ay2, by2) - maximum(ay1, by1));
  const Tensor uni = column(a, 2) * column(a, 3) + column(b, 2) * column(b, 3) - inter;
  const Tensor area = (maximum(ax2, bx2) - minimum(ax1, bx1)) * (maximum(ay2, by2) - minimum(ay1, by1));
  const Tensor g = inter / uni - (area - uni) / area;
  return reshape(g, {a.size(0)});
}

Tensor quality_focal_loss(const Tensor& logits, const Tensor& targets) {
  return sum(square(sigmoid(logits) - targets) * bce_with_logits(logits, targets));
}

Tensor focal_loss(const Tensor& p_t, const Tensor& fg, double alpha, double gamma) {
  const auto f = fg.data();
  double num_fg = 0;
  std::vector<Real> w(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    num_fg += f[i];
    w[i] = static_cast<Real>(f[i] * alpha + (1 - f[i]) * (1 - alpha));
  }
  const Tensor weights = Tensor::from_data(fg.shape(), std::move(w));
  const Tensor nll = -log(clamp(p_t, Real(kProbEps), 1));
  const Tensor mod = gamma == 0 ? Tensor::full(p_t.shape(), 1) : pow(1 - p_t, static_cast<Real>(gamma));
  return sum(weights * mod * nll) * static_cast<Real>(1.0 / std::max(num_fg, 1.0));
}

Tensor depth_map_loss(const Tensor& logits, const std::vector<std::vector<Index>>& labels, double alpha,
                      double gamma) {
  const Index n = logits.size(0), classes = logits.size(1), hw = logits.size(2) * logits.size(3);
  if (static_cast<Index>(labels.size()) != n) throw ContractError("depth_map_loss: one label map per image expected");
  std::vector<Real> onehot(static_cast<std::size_t>(n * classes * hw), 0);
  std::vector<Real> fg(static_cast<std::size_t>(n * hw), 0);
  for (Index b = 0; b < n; ++b) {
    const auto& lab = labels[static_cast<std::size_t>(b)];
    if (static_cast<Index>(lab.size()) != hw) throw ContractError("depth_map_loss: label map size mismatch");
    for (Index p = 0; p < hw; ++p) {
      const Index c = lab[static_cast<std::size_t>(p)];
      onehot[static_cast<std::size_t>((b * classes + c) * hw + p)] = 1;
      fg[static_cast<std::size_t>(b * hw + p)] = c == classes - 1 ? 0 : 1;
    }
  }
  const Tensor log_pt =
      sum(log_softmax(logits, 1) * Tensor::from_data(logits.shape(), std::move(onehot)), 1);  // [N, h, w]
  return focal_loss(exp(log_pt), Tensor::from_data(log_pt.shape(), std::move(fg)), alpha, gamma);
}

Eigen::MatrixXd match_cost(const Tensor& logits, const Tensor& box6, Index batch,
                           const std::vector<ObjectTarget>& gts, const LossWeights& w, const CostOptions& opts) {
  const Index q = box6.size(1), classes = logits.size(2);
  const Index n_gt = static_cast<Index>(gts.size());
  const auto lg = logits.data();
  const auto bx = box6.data();
  Eigen::MatrixXd cost(q, n_gt);
  for (Index i = 0; i < q; ++i) {
    std::array<double, 6> pb{};
    for (int k = 0; k < 6; ++k) pb[static_cast<std::size_t>(k)] = bx[static_cast<std::size_t>((batch * q + i) * 6 + k)];
    for (Index j = 0; j < n_gt; ++j) {
      const ObjectTarget& g = gts[static_cast<std::size_t>(j)];
      const Index c = opts.class_agnostic ? 0 : g.category;
      const double p = sigmoid_value(lg[static_cast<std::size_t>((batch * q + i) * classes + c)]);
      const double iou = box_iou(box4(pb), box4(g.box6));
      double l1 = 0;
      for (std::size_t k = 0; k < 6; ++k)
        if (opts.l1_mask[k]) l1 += std::abs(pb[k] - g.box6[k]);
      double total = w.cls * (quality_focal_term(p, iou) - quality_focal_term(p, 0)) + w.l1 * l1;
      if (opts.use_giou) total += w.giou * (1 - generalized_iou(box4(pb), box4(g.box6)));
      cost(i, j) = total;
    }
  }
  return cost;
}

Tensor compose_overall(const Tensor& l_2d, const Tensor& l_3d, const Tensor& l_enc, const Tensor& l_dmap,
                       Index n_gt) {
  return (l_2d + l_3d + l_enc) * static_cast<Real>(1.0 / static_cast<double>(std::max<Index>(n_gt, 1))) + l_dmap;
}

std::vector<MatchResult> match_layer(const Predictions& pred, const std::vector<ImageTargets>& targets,
                                     const LossWeights& w) {
  std::vector<MatchResult> out;
  for (std::size_t b = 0; b < targets.size(); ++b)
    out.push_back(hungarian_match(match_cost(pred.logits, pred.box6, static_cast<Index>(b), targets[b].objects, w)));
  return out;
}

namespace {

struct Gathered {
  std::vector<Index> flat;  // batch * Q + query
  std::vector<const ObjectTarget*> gt;
};

Gathered gather(const std::vector<MatchResult>& matches, const std::vector<ImageTargets>& targets, Index q) {
  Gathered g;
  for (std::size_t b = 0; b < matches.size(); ++b)
    for (const auto& [i, j] : matches[b].pairs) {
      g.flat.push_back(static_cast<Index>(b) * q + i);
      g.gt.push_back(&targets[b].objects[static_cast<std::size_t>(j)]);
    }
  return g;
}

Tensor gt_box6(const Gathered& g) {
  std::vector<Real> v;
  for (const auto* o : g.gt)
    for (double x : o->box6) v.push_back(static_cast<Real>(x));
  return Tensor::from_data({static_cast<Index>(g.gt.size()), 6}, std::move(v));
}

std::array<double, 4> pred_box4(const Tensor& box6, Index flat) {
  const auto d = box6.data();
  const auto at = [&](int k) { return static_cast<double>(d[static_cast<std::size_t>(flat * 6 + k)]); };
  return {at(2), at(3), at(4), at(5)};
}

}  // namespace

LayerLoss decoder_layer_loss(const Predictions& pred, const std::vector<ImageTargets>& targets,
                             const std::vector<MatchResult>& matches, const LossWeights& w) {
  const Index n = pred.logits.size(0), q = pred.logits.size(1), classes = pred.logits.size(2);
  const Gathered g = gather(matches, targets, q);
  LayerLoss out;

  std::vector<Real> cls_target(static_cast<std::size_t>(n * q * classes), 0);
  for (std::size_t m = 0; m < g.flat.size(); ++m) {
    const double iou = box_iou(pred_box4(pred.box6, g.flat[m]), box4(g.gt[m]->box6));
    cls_target[static_cast<std::size_t>(g.flat[m] * classes + g.gt[m]->category)] = static_cast<Real>(iou);
  }
  const Tensor cls = quality_focal_loss(pred.logits, Tensor::from_data(pred.logits.shape(), std::move(cls_target))) *
                     static_cast<Real>(w.cls);
  out.terms["cls"] = cls.item();

  if (g.flat.empty()) {
    out.l_2d = cls;
    out.l_3d = zero();
    for (const char* k : {"l1", "giou", "depth", "dims", "angle"}) out.terms[k] = 0;
    return out;
  }
  const Index m = static_cast<Index>(g.flat.size());
  const Tensor pb = index_select(reshape(pred.box6, {n * q, 6}), 0, g.flat);
  const Tensor tb = gt_box6(g);
  const Tensor l1 = sum(abs(pb - tb)) * static_cast<Real>(w.l1);
  const Tensor giou = sum(1 - generalized_iou(slice(pb, 1, 2, 4), slice(tb, 1, 2, 4))) * static_cast<Real>(w.giou);
  out.l_2d = cls + l1 + giou;
  out.terms["l1"] = l1.item();
  out.terms["giou"] = giou.item();

  std::vector<Real> depth, dims, angle;
  for (const auto* o : g.gt) {
    depth.push_back(static_cast<Real>(o->depth));
    for (double d : o->dims) dims.push_back(static_cast<Real>(d));
    angle.push_back(static_cast<Real>(o->sin_alpha));
    angle.push_back(static_cast<Real>(o->cos_alpha));
  }
  const Tensor mu = index_select(reshape(pred.depth, {n * q}), 0, g.flat);
  const Tensor ls = index_select(reshape(pred.log_sigma, {n * q}), 0, g.flat);
  const Tensor l_depth =
      sum(abs(mu - Tensor::from_data({m}, std::move(depth))) * exp(-ls) * static_cast<Real>(std::sqrt(2.0)) + ls);
  const Tensor l_dims =
      sum(abs(index_select(reshape(pred.dims, {n * q, 3}), 0, g.flat) - Tensor::from_data({m, 3}, std::move(dims))));
  const Tensor l_angle = sum(
      abs(index_select(reshape(pred.angle, {n * q, 2}), 0, g.flat) - Tensor::from_data({m, 2}, std::move(angle))));
  out.l_3d = l_depth + l_dims + l_angle;
  out.terms["depth"] = l_depth.item();
  out.terms["dims"] = l_dims.item();
  out.terms["angle"] = l_angle.item();
  return out;
}

Tensor encoder_loss(const EncoderProposals& enc, const std::vector<ImageTargets>& targets, const LossWeights& w,
                    std::map<std::string, double>* terms) {
  if (!enc.objectness.defined() || !(enc.supervise_center || enc.supervise_box)) return zero();
  const Index n = enc.anchors.size(0), q = enc.anchors.size(1);
  CostOptions opts;
  opts.l1_mask = {enc.supervise_center, enc.supervise_center, enc.supervise_box,
                  enc.supervise_box,    enc.supervise_box,    enc.supervise_box};
  opts.use_giou = enc.supervise_box;
  opts.class_agnostic = true;
  const Tensor logits = reshape(enc.objectness, {n, q, 1});
  std::vector<MatchResult> matches;
  for (Index b = 0; b < n; ++b)
    matches.push_back(
        hungarian_match(match_cost(logits, enc.anchors, b, targets[static_cast<std::size_t>(b)].objects, w, opts)));
  const Gathered g = gather(matches, targets, q);

  std::vector<Real> obj_target(static_cast<std::size_t>(n * q), 0);
  for (std::size_t m = 0; m < g.flat.size(); ++m) {
    const double iou = enc.supervise_box ? box_iou(pred_box4(enc.anchors, g.flat[m]), box4(g.gt[m]->box6)) : 1.0;
    obj_target[static_cast<std::size_t>(g.flat[m])] = static_cast<Real>(iou);
  }
  const Tensor cls = quality_focal_loss(enc.objectness, Tensor::from_data({n, q}, std::move(obj_target))) *
                     static_cast<Real>(w.cls);
  Tensor total = cls;
  double l1_value = 0, giou_value = 0;
  if (!g.flat.empty()) {
    std::vector<Real> mask;
    for (bool on : opts.l1_mask) mask.push_back(on ? 1 : 0);
    const Tensor pb = index_select(reshape(enc.anchors, {n * q, 6}), 0, g.flat);
    const Tensor tb = gt_box6(g);
    const Tensor l1 = sum(abs(pb - tb) * Tensor::from_data({1, 6}, std::move(mask))) * static_cast<Real>(w.l1);
    total = total + l1;
    l1_value = l1.item();
    if (opts.use_giou) {
      const Tensor giou =
          sum(1 - generalized_iou(slice(pb, 1, 2, 4), slice(tb, 1, 2, 4))) * static_cast<Real>(w.giou);
      total = total + giou;
      giou_value = giou.item();
    }
  }
  if (terms) {
    (*terms)["enc_cls"] += cls.item();
    (*terms)["enc_l1"] += l1_value;
    (*terms)["enc_giou"] += giou_value;
  }
  return total;
}

LossBreakdown compute_losses(const ModelOutput& out, const std::vector<ImageTargets>& targets, const LossWeights& w) {
  LossBreakdown r;
  for (const auto& t : targets) r.num_gt += static_cast<Index>(t.objects.size());
  r.l_2d = zero();
  r.l_3d = zero();
  for (const char* k : {"cls", "l1", "giou", "depth", "dims", "angle", "enc_cls", "enc_l1", "enc_giou"})
    r.terms[k] = 0;
  for (const auto& layer : out.layers) {
    const LayerLoss ll = decoder_layer_loss(layer, targets, match_layer(layer, targets, w), w);
    r.l_2d = r.l_2d + ll.l_2d;
    r.l_3d = r.l_3d + ll.l_3d;
    for (const auto& [k, v] : ll.terms) r.terms[k] += v;
  }
  r.l_enc = encoder_loss(out.enc, targets, w, &r.terms);
  std::vector<std::vector<Index>> labels;
  for (const auto& t : targets) labels.push_back(t.depth_labels);
  r.l_dmap = depth_map_loss(out.depth_logits, labels, w.focal_alpha, w.focal_gamma) * static_cast<Real>(w.dmap);
  r.overall = compose_overall(r.l_2d, r.l_3d, r.l_enc, r.l_dmap, r.num_gt);
  return r;
}

}  // namespace mdnx
