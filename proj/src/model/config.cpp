#include "mdnx/model/config.hpp"

#include <cmath>

namespace mdnx {

namespace {

template <class E, std::size_t N>
E parse_enum(const std::string& s, const char* what, const std::array<std::pair<const char*, E>, N>& table) {
  std::string valid;
  for (const auto& [name, value] : table) {
    if (s == name) return value;
    valid += valid.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError("unknown " + std::string(what) + " '" + s + "' (valid: " + valid + ")");
}

constexpr std::array<std::pair<const char*, EncoderVariant>, 4> kEncoders = {
    {{"hybrid", EncoderVariant::kHybrid},
     {"hybrid-L", EncoderVariant::kHybridL},
     {"monodetr", EncoderVariant::kMonoDetr},
     {"rt", EncoderVariant::kRt}}};
constexpr std::array<std::pair<const char*, DepthVariant>, 2> kDepths = {
    {{"E", DepthVariant::kE}, {"A", DepthVariant::kA}}};
constexpr std::array<std::pair<const char*, PosEmbedKind>, 4> kPosEmbeds = {
    {{"3d-sincos", PosEmbedKind::kSinCos3d},
     {"2d-sincos", PosEmbedKind::kSinCos2d},
     {"meter-wise", PosEmbedKind::kMeterWise},
     {"k-bin", PosEmbedKind::kKBin}}};
constexpr std::array<std::pair<const char*, QueryStrategy>, 4> kStrategies = {
    {{"L-center", QueryStrategy::kLCenter},
     {"L-center+enc-box", QueryStrategy::kLCenterEncBox},
     {"enc-center", QueryStrategy::kEncCenter},
     {"enc-center+enc-box", QueryStrategy::kEncCenterEncBox}}};

template <class E, std::size_t N>
const char* name_of(E v, const std::array<std::pair<const char*, E>, N>& table) {
  for (const auto& [name, value] : table)
    if (value == v) return name;
  return "?";
}

}  // namespace

const char* to_string(EncoderVariant v) { return name_of(v, kEncoders); }
const char* to_string(DepthVariant v) { return name_of(v, kDepths); }
const char* to_string(PosEmbedKind v) { return name_of(v, kPosEmbeds); }
const char* to_string(QueryStrategy v) { return name_of(v, kStrategies); }

EncoderVariant parse_encoder_variant(const std::string& s) { return parse_enum(s, "encoder variant", kEncoders); }
DepthVariant parse_depth_variant(const std::string& s) { return parse_enum(s, "depth variant", kDepths); }
PosEmbedKind parse_pos_embed(const std::string& s) { return parse_enum(s, "positional embedding", kPosEmbeds); }
QueryStrategy parse_query_strategy(const std::string& s) { return parse_enum(s, "query strategy", kStrategies); }

bool uses_enc_center(QueryStrategy s) {
  return s == QueryStrategy::kEncCenter || s == QueryStrategy::kEncCenterEncBox;
}

bool uses_enc_box(QueryStrategy s) {
  return s == QueryStrategy::kLCenterEncBox || s == QueryStrategy::kEncCenterEncBox;
}

std::array<Index, 4> ModelConfig::channels() const {
  std::array<Index, 4> out{};
  const Index base[4] = {16, 32, 48, 64};
  for (int i = 0; i < 4; ++i) out[i] = std::max<Index>(1, static_cast<Index>(std::lround(base[i] * backbone_width)));
  return out;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(dim > 0 && classes > 0, "model.dim and model.classes must be positive");
  need(backbone_width > 0, "model.backbone_width must be positive");
  need(encoder_heads > 0 && dim % encoder_heads == 0, "model.dim must be divisible by encoder.heads");
  need(decoder_heads > 0 && dim % decoder_heads == 0, "model.dim must be divisible by decoder.heads");
  need(encoder_ffn > 0 && decoder_ffn > 0, "feed-forward sizes must be positive");
  need(depth_bins >= 1, "depth.bins must be at least 1");
  need(depth_min > 0 && depth_max > depth_min, "depth.min and depth.max must satisfy 0 < min < max");
  need(queries >= 1, "query.count must be at least 1");
  need(decoder_layers >= 1, "decoder.layers must be at least 1");
  need(depth_pos_embed != PosEmbedKind::kSinCos3d, "depth.pos_embed cannot be 3d-sincos (f_D tokens have no box)");
  if (query_pos_embed == PosEmbedKind::kSinCos3d) need(dim % 6 == 0, "3d-sincos needs model.dim divisible by 6");
  if (query_pos_embed == PosEmbedKind::kSinCos2d || depth_pos_embed == PosEmbedKind::kSinCos2d)
    need(dim % 2 == 0, "2d-sincos needs an even model.dim");
  need(dim % 2 == 0, "model.dim must be even for the grid positional code");
  for (Index n : sdc_counts) need(n >= 0, "depth.sdc_counts entries must be non-negative");
  if (depth == DepthVariant::kA) {
    const auto ch = channels();
    for (int i = 1; i < 4; ++i)
      need(ch[static_cast<std::size_t>(i)] % 8 == 0,
           "depth variant A needs backbone channels divisible by 8 attention heads");
  }
}

ModelConfig toy_model_config() {
  ModelConfig c;
  c.dim = 48;
  c.backbone_width = 0.5;
  c.encoder_ffn = 96;
  c.decoder_ffn = 96;
  return c;
}

}  // namespace mdnx
