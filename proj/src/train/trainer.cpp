#include "mdnx/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mdnx/core/checkpoint.hpp"
#include "mdnx/core/rng.hpp"

namespace mdnx {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be non-negative");
  if (!(lr_factor > 0)) throw ConfigError("train.lr_factor must be positive");
  if (grad_clip < 0) throw ConfigError("train.grad_clip must be non-negative");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be non-negative");
  for (Index m : milestones)
    if (m < 0) throw ConfigError("train.milestones must be non-negative");
}

std::string metrics_header() { return "step\tepoch\tlr\toverall\tl_2d\tl_3d\tl_enc\tl_dmap\tnum_gt\n"; }

std::string metrics_row(const StepMetrics& m) {
  using geo::format_number;
  return std::to_string(m.step) + '\t' + std::to_string(m.epoch) + '\t' + format_number(m.lr) + '\t' +
         format_number(m.overall) + '\t' + format_number(m.l_2d) + '\t' + format_number(m.l_3d) + '\t' +
         format_number(m.l_enc) + '\t' + format_number(m.l_dmap) + '\t' + std::to_string(m.num_gt) + '\n';
}

std::vector<ImageTargets> batch_targets(const Detector& model, const ModelOutput& out,
                                        const std::vector<const Sample*>& batch) {
  std::vector<ImageTargets> targets;
  for (const Sample* s : batch) {
    targets.push_back(build_targets(s->annotation, s->calib, model.config().classes, out.grid_h, out.grid_w,
                                    model.bin_edges()));
  }
  return targets;
}

LossBreakdown batch_loss(Detector& model, const std::vector<const Sample*>& batch, const LossWeights& w) {
  NoGradGuard guard;
  const ModelOutput out = model.forward(stack_images(batch));
  return compute_losses(out, batch_targets(model, out, batch), w);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, Index epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch) + 1);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

std::vector<bool> epoch_flips(std::size_t n, std::uint64_t seed, Index epoch) {
  Rng rng((seed ^ 0xf1f1f1f1f1f1f1f1ULL) * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch) + 1);
  std::vector<bool> flips(n);
  for (std::size_t i = 0; i < n; ++i) flips[i] = rng.uniform() < 0.5;
  return flips;
}

Trainer::Trainer(Detector& model, TrainConfig cfg, LossWeights w)
    : model_(model),
      cfg_((cfg.validate(), std::move(cfg))),
      w_(w),
      params_(model.parameters()),
      opt_(params_, AdamWOptions{cfg_.lr, 0.9, 0.999, 1e-8, cfg_.weight_decay}),
      schedule_(cfg_.lr, cfg_.milestones, cfg_.lr_factor) {}

StepMetrics Trainer::step(const std::vector<const Sample*>& batch, Index epoch) {
  model_.train();
  Tape::current().reset();
  opt_.zero_grad();
  opt_.set_lr(schedule_.lr(epoch));
  const ModelOutput out = model_.forward(stack_images(batch));
  const LossBreakdown loss = compute_losses(out, batch_targets(model_, out, batch), w_);

  StepMetrics m;
  m.step = step_;
  m.epoch = epoch;
  m.lr = opt_.lr();
  m.overall = loss.overall.item();
  m.l_2d = loss.l_2d.item();
  m.l_3d = loss.l_3d.item();
  m.l_enc = loss.l_enc.item();
  m.l_dmap = loss.l_dmap.item();
  m.num_gt = loss.num_gt;
  if (!std::isfinite(m.overall)) {
    Tape::current().reset();
    throw NumericError("non-finite loss at step " + std::to_string(step_));
  }
  backward(loss.overall);
  Tape::current().reset();
  for (const auto& p : params_)
    for (Real g : p.grad())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient at step " + std::to_string(step_));
  if (cfg_.grad_clip > 0) clip_grad_norm(params_, cfg_.grad_clip);
  opt_.step();
  ++step_;
  return m;
}

TrainResult Trainer::fit(const std::vector<Sample>& data, const std::function<void(const StepMetrics&)>& on_step) {
  if (data.empty()) throw ConfigError("training set is empty");
  TrainResult result;
  std::ofstream metrics;
  const bool files = !cfg_.out_dir.empty();
  if (files) {
    std::filesystem::create_directories(cfg_.out_dir);
    save_checkpoint(cfg_.out_dir / "init.ckpt", model_);
    metrics.open(cfg_.out_dir / "metrics.tsv", std::ios::binary | std::ios::trunc);
    if (!metrics) throw ConfigError("cannot write " + (cfg_.out_dir / "metrics.tsv").string());
    metrics << metrics_header();
  }
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  for (Index epoch = 0; epoch < cfg_.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), cfg_.seed, epoch);
    const auto flips = epoch_flips(data.size(), cfg_.seed, epoch);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<Sample> flipped;
      flipped.reserve(bs);
      std::vector<const Sample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        const Sample& s = data[order[i]];
        if (cfg_.flip && flips[i]) {
          flipped.push_back(flip_sample(s));
          batch.push_back(&flipped.back());
        } else {
          batch.push_back(&s);
        }
      }
      const StepMetrics m = step(batch, epoch);
      result.steps.push_back(m);
      if (files) metrics << metrics_row(m) << std::flush;
      if (on_step) on_step(m);
    }
    ++result.epochs_run;
    const bool last = epoch + 1 == cfg_.epochs;
    if (files && (last || (cfg_.checkpoint_every > 0 && (epoch + 1) % cfg_.checkpoint_every == 0))) {
      save_checkpoint(cfg_.out_dir / "model.ckpt", model_);
    }
  }
  return result;
}

std::vector<geo::Annotation> predict(Detector& model, const std::vector<Sample>& data, Index batch_size,
                                     const DecodeOptions& opts) {
  NoGradGuard guard;
  const bool was_training = model.training();
  model.eval();
  std::vector<geo::Annotation> out;
  const auto bs = static_cast<std::size_t>(std::max<Index>(batch_size, 1));
  for (std::size_t start = 0; start < data.size(); start += bs) {
    std::vector<const Sample*> batch;
    for (std::size_t i = start; i < std::min(data.size(), start + bs); ++i) batch.push_back(&data[i]);
    const ModelOutput res = model.forward(stack_images(batch));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      geo::Annotation ann;
      ann.objects = decode_to_boxes(res.layers.back(), static_cast<Index>(i), batch[i]->calib, opts);
      out.push_back(std::move(ann));
    }
  }
  model.train(was_training);
  return out;
}

geo::EvalReport evaluate_samples(const std::vector<Sample>& data, const std::vector<geo::Annotation>& predictions,
                                 const std::vector<double>& iou_thresholds, const std::vector<int>& categories) {
  if (data.size() != predictions.size()) throw ContractError("evaluate_samples: prediction count mismatch");
  std::vector<geo::Annotation> gt;
  for (const auto& s : data) gt.push_back(s.annotation);
  geo::EvalConfig cfg;
  cfg.iou_thresholds = iou_thresholds;
  cfg.categories = categories;
  cfg.difficulty = geo::DifficultyThresholds::for_image_height(data.empty() ? 375 : data.front().calib.height);
  return geo::evaluate(gt, predictions, cfg);
}

}  // namespace mdnx
