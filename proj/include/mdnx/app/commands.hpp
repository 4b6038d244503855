#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mdnx/app/run_config.hpp"
#include "mdnx/geometry/image.hpp"

namespace mdnx {

enum ExitCode { kExitOk = 0, kExitUsage = 2, kExitCheckpoint = 3, kExitNumeric = 4 };

struct CommandContext {
  RunConfig cfg;
  std::string config_text;  // the config file as read, kept for provenance
  bool strict = false;
  int threads = 1;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

/// Writes config.txt (verbatim), config.resolved.txt and VERSION into `dir`.
void write_provenance(const std::filesystem::path& dir, const CommandContext& ctx);

/// MDNX_THREADS, clamped to at least 1; unset or malformed gives 1.
int threads_from_env();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index runs
/// exactly once; the first exception is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Training samples named by the config: synthetic scenes or a KITTI directory.
std::vector<Sample> load_training_data(const RunConfig& cfg);
/// Evaluation samples: the held-out synthetic scenes when data.val_count > 0,
/// otherwise the training data.
std::vector<Sample> load_eval_data(const RunConfig& cfg);

/// Per-image eval-mode inference on the worker pool. Results are in sample
/// order and independent of the thread count.
std::vector<geo::Annotation> predict_parallel(Detector& model, const std::vector<Sample>& data,
                                              const DecodeOptions& opts, int threads);

// ---- ablation ----

struct AblationVariant {
  std::string name;
  std::function<void(ModelConfig&)> apply;
};

/// Accepted axis names.
const std::vector<std::string>& ablation_axes();
/// Rows of one sweep. Throws ConfigError listing the valid axes.
std::vector<AblationVariant> ablation_variants(const std::string& axis);

struct AblationRow {
  std::string variant;
  std::vector<double> ap;  // AP3D per (iou threshold, difficulty), thresholds outer
};
/// Tab-separated table: variant, then one column per threshold and difficulty.
std::string ablation_table(const std::vector<AblationRow>& rows, const std::vector<double>& iou_thresholds);

// ---- heatmap ----

/// Fixed 256-entry blue to red lookup.
geo::Rgb heat_color(int index);

/// Final-layer visual attention for image `batch`, averaged over heads and over
/// the `count` highest-scoring queries. Returns h*w weights summing to 1.
std::vector<double> top_query_attention(const ModelOutput& out, Index batch, int count);

/// Bilinearly upsamples an h x w attention grid covering a padded_w x
/// padded_h input, maps value / max through heat_color and blends with alpha
/// 0.5 over `image`. Output size equals the image size.
geo::Image render_heatmap(const geo::Image& image, const std::vector<double>& attention, Index grid_h, Index grid_w,
                          int padded_w, int padded_h);

// ---- commands ----

int cmd_train(CommandContext& ctx);
int cmd_eval(CommandContext& ctx);
int cmd_infer(CommandContext& ctx);
int cmd_ablate(CommandContext& ctx);
int cmd_heatmap(CommandContext& ctx);
/// Writes the configured synthetic scenes as a KITTI-style directory.
int cmd_synth(CommandContext& ctx);

/// Full command line: `mdnx <command> --config PATH [--seed N] [--strict]
/// [--set key=value]...`. Errors are reported on `err` and mapped to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdnx
