#pragma once

#include <array>
#include <string>

#include "mdnx/core/tensor.hpp"

namespace mdnx {

enum class EncoderVariant { kHybrid, kHybridL, kMonoDetr, kRt };
enum class DepthVariant { kE, kA };
enum class PosEmbedKind { kSinCos3d, kSinCos2d, kMeterWise, kKBin };
enum class QueryStrategy { kLCenter, kLCenterEncBox, kEncCenter, kEncCenterEncBox };

const char* to_string(EncoderVariant v);
const char* to_string(DepthVariant v);
const char* to_string(PosEmbedKind v);
const char* to_string(QueryStrategy v);
/// Parsers throw ConfigError listing the accepted spellings.
EncoderVariant parse_encoder_variant(const std::string& s);
DepthVariant parse_depth_variant(const std::string& s);
PosEmbedKind parse_pos_embed(const std::string& s);
QueryStrategy parse_query_strategy(const std::string& s);

bool uses_enc_center(QueryStrategy s);
bool uses_enc_box(QueryStrategy s);

struct ModelConfig {
  Index dim = 96;
  Index classes = 3;
  double backbone_width = 1.0;

  EncoderVariant encoder = EncoderVariant::kHybrid;
  Index encoder_heads = 8;
  Index encoder_ffn = 192;

  DepthVariant depth = DepthVariant::kE;
  Index depth_bins = 12;
  double depth_min = 1.0;
  double depth_max = 60.0;
  std::array<Index, 3> sdc_counts = {2, 2, 4};
  PosEmbedKind depth_pos_embed = PosEmbedKind::kSinCos2d;  // for f_D tokens
  bool sdc_pointwise = false;
  bool rgfi_pointwise = false;

  Index queries = 50;
  QueryStrategy strategy = QueryStrategy::kEncCenterEncBox;
  Index decoder_layers = 3;
  Index decoder_heads = 8;
  Index decoder_ffn = 192;
  PosEmbedKind query_pos_embed = PosEmbedKind::kSinCos3d;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  /// Channel plan (16, 32, 48, 64) scaled by the width multiplier.
  std::array<Index, 4> channels() const;
};

/// Small configuration used by tests and the desk-scale overfit runs.
ModelConfig toy_model_config();

}  // namespace mdnx
