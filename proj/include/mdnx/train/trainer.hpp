#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mdnx/geometry/eval.hpp"
#include "mdnx/model/model.hpp"
#include "mdnx/train/dataset.hpp"
#include "mdnx/train/losses.hpp"
#include "mdnx/train/optim.hpp"

namespace mdnx {

struct TrainConfig {
  Index epochs = 1;
  Index batch_size = 8;
  double lr = 2e-4;
  double weight_decay = 1e-4;
  std::vector<Index> milestones;  // epochs at which lr is multiplied by lr_factor
  double lr_factor = 0.1;
  std::uint64_t seed = 0;         // shuffling and flip draws
  bool flip = false;              // mirror each sample with probability 1/2
  double grad_clip = 0;           // global norm; 0 disables
  Index checkpoint_every = 1;     // epochs between checkpoints; 0 writes only the final one
  std::filesystem::path out_dir;  // empty: no files are written

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

struct StepMetrics {
  Index step = 0;
  Index epoch = 0;
  double lr = 0;
  double overall = 0, l_2d = 0, l_3d = 0, l_enc = 0, l_dmap = 0;
  Index num_gt = 0;
};

/// Header and one row of metrics.tsv.
std::string metrics_header();
std::string metrics_row(const StepMetrics& m);

struct TrainResult {
  std::vector<StepMetrics> steps;
  Index epochs_run = 0;
};

/// Targets for a batch after a forward pass fixed the depth-map grid.
std::vector<ImageTargets> batch_targets(const Detector& model, const ModelOutput& out,
                                        const std::vector<const Sample*>& batch);

/// Forward pass and full loss without touching gradients or parameters.
LossBreakdown batch_loss(Detector& model, const std::vector<const Sample*>& batch, const LossWeights& w);

/// Sample order for one epoch: a permutation seeded by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, Index epoch);
/// Per-sample flip draws for one epoch, aligned with epoch_order.
std::vector<bool> epoch_flips(std::size_t n, std::uint64_t seed, Index epoch);

/// AdamW training with a multi-step schedule. With an output directory it
/// writes init.ckpt before the first step, model.ckpt after each checkpoint
/// epoch and metrics.tsv as steps complete. A non-finite loss or gradient
/// throws NumericError before the update, leaving the last checkpoint intact.
class Trainer {
 public:
  Trainer(Detector& model, TrainConfig cfg, LossWeights w);

  /// One optimizer step on a batch.
  StepMetrics step(const std::vector<const Sample*>& batch, Index epoch);
  TrainResult fit(const std::vector<Sample>& data, const std::function<void(const StepMetrics&)>& on_step = {});

  AdamW& optimizer() { return opt_; }

 private:
  Detector& model_;
  TrainConfig cfg_;
  LossWeights w_;
  std::vector<Tensor> params_;
  AdamW opt_;
  MultiStepSchedule schedule_;
  Index step_ = 0;
};

/// Eval-mode inference over a dataset in batches; one annotation per sample.
std::vector<geo::Annotation> predict(Detector& model, const std::vector<Sample>& data, Index batch_size = 8,
                                     const DecodeOptions& opts = {});

/// AP40 report of predictions against the samples' labels. Difficulty
/// heights are scaled to the first sample's image height.
geo::EvalReport evaluate_samples(const std::vector<Sample>& data, const std::vector<geo::Annotation>& predictions,
                                 const std::vector<double>& iou_thresholds, const std::vector<int>& categories);

}  // namespace mdnx
