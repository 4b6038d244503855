#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mdnx/model/config.hpp"
#include "mdnx/model/model.hpp"
#include "mdnx/train/losses.hpp"
#include "mdnx/train/synth.hpp"
#include "mdnx/train/trainer.hpp"

namespace mdnx {

/// Version string written next to every artifact.
const char* version_string();

inline constexpr int kConfigVersion = 1;

enum class DataSource { kSynthetic, kKitti };

struct RunConfig {
  int config_version = kConfigVersion;
  std::uint64_t seed = 0;

  DataSource source = DataSource::kSynthetic;
  std::filesystem::path data_dir;     // kitti: image_2 / label_2 / calib
  int synthetic_count = 50;
  std::uint64_t synthetic_seed = 1000;
  SynthConfig synth;
  int val_count = 0;                  // held-out synthetic scenes for eval/ablate; 0 reuses the training set

  std::filesystem::path output_dir = "mdnx_out";
  std::filesystem::path checkpoint;   // empty: <output_dir>/model.ckpt

  ModelConfig model = toy_model_config();
  TrainConfig train;
  std::optional<double> loss_dmap;    // unset: depends on the depth variant
  LossWeights loss;

  std::vector<double> iou_thresholds = {0.7, 0.5, 0.25};
  std::vector<int> categories = {geo::kCar};
  DecodeOptions decode;
  std::filesystem::path pred_dir;     // eval: score these label files instead of running the model

  std::filesystem::path image_dir;    // infer
  std::filesystem::path calib_dir;    // infer
  std::filesystem::path heatmap_image;
  std::filesystem::path heatmap_calib;
  int heatmap_queries = 1;
  std::string ablate_axis;

  /// Loss weights with the depth-variant default applied.
  LossWeights loss_weights() const;
  std::filesystem::path checkpoint_path() const;
  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Every accepted key, in serialization order.
const std::vector<std::string>& run_config_keys();

/// `key = value` lines; `#` starts a comment. Unknown or repeated keys and
/// malformed values throw ConfigError naming the key. A config_version other
/// than the current one is rejected.
RunConfig parse_run_config(std::string_view text);
/// Applies one `key=value` assignment on top of an existing config.
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
/// All keys with their effective values; parses back to the same config.
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace mdnx
