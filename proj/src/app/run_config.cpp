#include "mdnx/app/run_config.hpp"

#include <charconv>
#include <functional>
#include <set>

#include "mdnx/geometry/kitti.hpp"

#ifndef MDNX_VERSION
#define MDNX_VERSION "mdnx"
#endif

namespace mdnx {

const char* version_string() { return MDNX_VERSION; }

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    const std::string item = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" + value + "'");
}

template <class T>
T to_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return geo::parse_number(v);
  } catch (const Error&) {
    bad_value(key, v, "a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, "true or false");
}

template <class F>
auto rethrow_with_key(const std::string& key, F f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + geo::format_number(v[i]);
  return s;
}

template <class T>
std::string join_ints(const T& v) {
  std::string s;
  bool first = true;
  for (auto x : v) {
    s += (first ? "" : ",") + std::to_string(x);
    first = false;
  }
  return s;
}

struct Entry {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

using Registry = std::vector<std::pair<std::string, Entry>>;

Registry build_registry() {
  Registry r;
  auto add = [&](const char* key, auto set, auto get) { r.emplace_back(key, Entry{set, get}); };
  using S = const std::string&;
  const auto fmt = [](double v) { return geo::format_number(v); };
  const auto b = [](bool v) { return std::string(v ? "true" : "false"); };

  add("config_version", [](RunConfig& c, S k, S v) { c.config_version = to_int<int>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.config_version); });
  add("seed", [](RunConfig& c, S k, S v) { c.seed = to_int<std::uint64_t>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.seed); });

  add("data.source",
      [](RunConfig& c, S k, S v) {
        if (v == "synthetic") c.source = DataSource::kSynthetic;
        else if (v == "kitti") c.source = DataSource::kKitti;
        else bad_value(k, v, "one of synthetic, kitti");
      },
      [](const RunConfig& c) { return std::string(c.source == DataSource::kKitti ? "kitti" : "synthetic"); });
  add("data.dir", [](RunConfig& c, S, S v) { c.data_dir = v; }, [](const RunConfig& c) { return c.data_dir.string(); });
  add("data.count", [](RunConfig& c, S k, S v) { c.synthetic_count = to_int<int>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.synthetic_count); });
  add("data.seed", [](RunConfig& c, S k, S v) { c.synthetic_seed = to_int<std::uint64_t>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.synthetic_seed); });
  add("data.val_count", [](RunConfig& c, S k, S v) { c.val_count = to_int<int>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.val_count); });
  add("data.width", [](RunConfig& c, S k, S v) { c.synth.width = to_int<int>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.synth.width); });
  add("data.height", [](RunConfig& c, S k, S v) { c.synth.height = to_int<int>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.synth.height); });
  add("data.min_objects", [](RunConfig& c, S k, S v) { c.synth.min_objects = to_int<int>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.synth.min_objects); });
  add("data.max_objects", [](RunConfig& c, S k, S v) { c.synth.max_objects = to_int<int>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.synth.max_objects); });
  add("data.depth_min", [](RunConfig& c, S k, S v) { c.synth.depth_min = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.synth.depth_min); });
  add("data.depth_max", [](RunConfig& c, S k, S v) { c.synth.depth_max = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.synth.depth_max); });
  add("data.categories",
      [](RunConfig& c, S k, S v) {
        c.synth.categories.clear();
        for (const auto& name : split_list(v)) {
          const int cat = geo::category_from_name(name);
          if (cat < 0) bad_value(k, name, "Car, Pedestrian or Cyclist");
          c.synth.categories.push_back(cat);
        }
      },
      [](const RunConfig& c) {
        std::string s;
        for (std::size_t i = 0; i < c.synth.categories.size(); ++i)
          s += (i ? "," : "") + std::string(geo::category_name(c.synth.categories[i]));
        return s;
      });

  add("output.dir", [](RunConfig& c, S, S v) { c.output_dir = v; }, [](const RunConfig& c) { return c.output_dir.string(); });
  add("checkpoint", [](RunConfig& c, S, S v) { c.checkpoint = v; }, [](const RunConfig& c) { return c.checkpoint.string(); });

  add("model.dim", [](RunConfig& c, S k, S v) { c.model.dim = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.model.dim); });
  add("model.classes", [](RunConfig& c, S k, S v) { c.model.classes = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.model.classes); });
  add("model.backbone_width", [](RunConfig& c, S k, S v) { c.model.backbone_width = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.model.backbone_width); });
  add("encoder.variant",
      [](RunConfig& c, S k, S v) { c.model.encoder = rethrow_with_key(k, [&] { return parse_encoder_variant(v); }); },
      [](const RunConfig& c) { return std::string(to_string(c.model.encoder)); });
  add("encoder.heads", [](RunConfig& c, S k, S v) { c.model.encoder_heads = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.model.encoder_heads); });
  add("encoder.ffn", [](RunConfig& c, S k, S v) { c.model.encoder_ffn = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.model.encoder_ffn); });
  add("depth.variant",
      [](RunConfig& c, S k, S v) { c.model.depth = rethrow_with_key(k, [&] { return parse_depth_variant(v); }); },
      [](const RunConfig& c) { return std::string(to_string(c.model.depth)); });
  add("depth.bins", [](RunConfig& c, S k, S v) { c.model.depth_bins = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.model.depth_bins); });
  add("depth.min", [](RunConfig& c, S k, S v) { c.model.depth_min = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.model.depth_min); });
  add("depth.max", [](RunConfig& c, S k, S v) { c.model.depth_max = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.model.depth_max); });
  add("depth.sdc_counts",
      [](RunConfig& c, S k, S v) {
        const auto items = split_list(v);
        if (items.size() != 3) bad_value(k, v, "three comma-separated counts");
        for (std::size_t i = 0; i < 3; ++i) c.model.sdc_counts[i] = to_int<Index>(k, items[i]);
      },
      [](const RunConfig& c) { return join_ints(c.model.sdc_counts); });
  add("depth.pos_embed",
      [](RunConfig& c, S k, S v) { c.model.depth_pos_embed = rethrow_with_key(k, [&] { return parse_pos_embed(v); }); },
      [](const RunConfig& c) { return std::string(to_string(c.model.depth_pos_embed)); });
  add("depth.sdc_pointwise", [](RunConfig& c, S k, S v) { c.model.sdc_pointwise = to_bool(k, v); },
      [b](const RunConfig& c) { return b(c.model.sdc_pointwise); });
  add("depth.rgfi_pointwise", [](RunConfig& c, S k, S v) { c.model.rgfi_pointwise = to_bool(k, v); },
      [b](const RunConfig& c) { return b(c.model.rgfi_pointwise); });
  add("query.count", [](RunConfig& c, S k, S v) { c.model.queries = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.model.queries); });
  add("query.strategy",
      [](RunConfig& c, S k, S v) { c.model.strategy = rethrow_with_key(k, [&] { return parse_query_strategy(v); }); },
      [](const RunConfig& c) { return std::string(to_string(c.model.strategy)); });
  add("query.pos_embed",
      [](RunConfig& c, S k, S v) { c.model.query_pos_embed = rethrow_with_key(k, [&] { return parse_pos_embed(v); }); },
      [](const RunConfig& c) { return std::string(to_string(c.model.query_pos_embed)); });
  add("decoder.layers", [](RunConfig& c, S k, S v) { c.model.decoder_layers = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.model.decoder_layers); });
  add("decoder.heads", [](RunConfig& c, S k, S v) { c.model.decoder_heads = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.model.decoder_heads); });
  add("decoder.ffn", [](RunConfig& c, S k, S v) { c.model.decoder_ffn = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.model.decoder_ffn); });

  add("train.epochs", [](RunConfig& c, S k, S v) { c.train.epochs = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.train.epochs); });
  add("train.batch_size", [](RunConfig& c, S k, S v) { c.train.batch_size = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.train.batch_size); });
  add("train.lr", [](RunConfig& c, S k, S v) { c.train.lr = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.train.lr); });
  add("train.weight_decay", [](RunConfig& c, S k, S v) { c.train.weight_decay = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.train.weight_decay); });
  add("train.milestones",
      [](RunConfig& c, S k, S v) {
        c.train.milestones.clear();
        for (const auto& item : split_list(v)) c.train.milestones.push_back(to_int<Index>(k, item));
      },
      [](const RunConfig& c) { return join_ints(c.train.milestones); });
  add("train.lr_factor", [](RunConfig& c, S k, S v) { c.train.lr_factor = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.train.lr_factor); });
  add("train.flip", [](RunConfig& c, S k, S v) { c.train.flip = to_bool(k, v); },
      [b](const RunConfig& c) { return b(c.train.flip); });
  add("train.grad_clip", [](RunConfig& c, S k, S v) { c.train.grad_clip = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.train.grad_clip); });
  add("train.checkpoint_every", [](RunConfig& c, S k, S v) { c.train.checkpoint_every = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); });

  add("loss.cls", [](RunConfig& c, S k, S v) { c.loss.cls = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.loss.cls); });
  add("loss.l1", [](RunConfig& c, S k, S v) { c.loss.l1 = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.loss.l1); });
  add("loss.giou", [](RunConfig& c, S k, S v) { c.loss.giou = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.loss.giou); });
  add("loss.dmap", [](RunConfig& c, S k, S v) { c.loss_dmap = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.loss_weights().dmap); });
  add("loss.focal_alpha", [](RunConfig& c, S k, S v) { c.loss.focal_alpha = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.loss.focal_alpha); });
  add("loss.focal_gamma", [](RunConfig& c, S k, S v) { c.loss.focal_gamma = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.loss.focal_gamma); });

  add("eval.iou_thresholds",
      [](RunConfig& c, S k, S v) {
        c.iou_thresholds.clear();
        for (const auto& item : split_list(v)) c.iou_thresholds.push_back(to_double(k, item));
      },
      [](const RunConfig& c) { return join_numbers(c.iou_thresholds); });
  add("eval.categories",
      [](RunConfig& c, S k, S v) {
        c.categories.clear();
        for (const auto& name : split_list(v)) {
          const int cat = geo::category_from_name(name);
          if (cat < 0) bad_value(k, name, "Car, Pedestrian or Cyclist");
          c.categories.push_back(cat);
        }
      },
      [](const RunConfig& c) {
        std::string s;
        for (std::size_t i = 0; i < c.categories.size(); ++i)
          s += (i ? "," : "") + std::string(geo::category_name(c.categories[i]));
        return s;
      });
  add("eval.score_threshold", [](RunConfig& c, S k, S v) { c.decode.score_threshold = to_double(k, v); },
      [fmt](const RunConfig& c) { return fmt(c.decode.score_threshold); });
  add("eval.max_detections", [](RunConfig& c, S k, S v) { c.decode.max_detections = to_int<Index>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.decode.max_detections); });

  add("eval.pred_dir", [](RunConfig& c, S, S v) { c.pred_dir = v; }, [](const RunConfig& c) { return c.pred_dir.string(); });
  add("infer.image_dir", [](RunConfig& c, S, S v) { c.image_dir = v; }, [](const RunConfig& c) { return c.image_dir.string(); });
  add("infer.calib_dir", [](RunConfig& c, S, S v) { c.calib_dir = v; }, [](const RunConfig& c) { return c.calib_dir.string(); });
  add("heatmap.image", [](RunConfig& c, S, S v) { c.heatmap_image = v; },
      [](const RunConfig& c) { return c.heatmap_image.string(); });
  add("heatmap.calib", [](RunConfig& c, S, S v) { c.heatmap_calib = v; },
      [](const RunConfig& c) { return c.heatmap_calib.string(); });
  add("heatmap.queries", [](RunConfig& c, S k, S v) { c.heatmap_queries = to_int<int>(k, v); },
      [](const RunConfig& c) { return std::to_string(c.heatmap_queries); });
  add("ablate.axis", [](RunConfig& c, S, S v) { c.ablate_axis = v; }, [](const RunConfig& c) { return c.ablate_axis; });
  return r;
}

const Registry& registry() {
  static const Registry r = build_registry();
  return r;
}

const Entry* find_entry(const std::string& key) {
  for (const auto& [k, e] : registry())
    if (k == key) return &e;
  return nullptr;
}

}  // namespace

LossWeights RunConfig::loss_weights() const {
  LossWeights w = loss;
  w.dmap = loss_dmap ? *loss_dmap : default_loss_weights(model.depth).dmap;
  return w;
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? output_dir / "model.ckpt" : checkpoint;
}

void RunConfig::validate() const {
  if (config_version != kConfigVersion) {
    throw ConfigError("config_version " + std::to_string(config_version) + " is not supported (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  model.validate();
  train.validate();
  synth.validate();
  if (synthetic_count < 1) throw ConfigError("data.count must be at least 1");
  if (val_count < 0) throw ConfigError("data.val_count must be non-negative");
  if (iou_thresholds.empty()) throw ConfigError("eval.iou_thresholds must list at least one threshold");
  for (double t : iou_thresholds)
    if (!(t > 0 && t <= 1)) throw ConfigError("eval.iou_thresholds must lie in (0, 1]");
  if (categories.empty()) throw ConfigError("eval.categories must name at least one category");
  for (int c : categories)
    if (c >= model.classes) throw ConfigError("eval.categories includes a class the model does not predict");
  if (heatmap_queries < 1) throw ConfigError("heatmap.queries must be at least 1");
  if (decode.max_detections < 1) throw ConfigError("eval.max_detections must be at least 1");
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, e] : registry()) k.push_back(key);
    return k;
  }();
  return keys;
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key '" + key + "'");
  e->set(cfg, key, value);
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value', got '" + content + "'");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' is set twice");
    apply_config_value(cfg, key, value);
  }
  if (cfg.config_version != kConfigVersion) {
    throw ConfigError("config_version " + std::to_string(cfg.config_version) + " is not supported (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, e] : registry()) out += key + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace mdnx
