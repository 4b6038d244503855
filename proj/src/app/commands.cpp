#include "mdnx/app/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "mdnx/core/checkpoint.hpp"
#include "mdnx/geometry/eval.hpp"

namespace mdnx {

namespace fs = std::filesystem;

namespace {

std::ostream& out_of(const CommandContext& ctx) { return ctx.out ? *ctx.out : std::cout; }
std::ostream& err_of(const CommandContext& ctx) { return ctx.err ? *ctx.err : std::cerr; }

std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

TrainConfig train_config_for(const RunConfig& cfg, const fs::path& out_dir) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  t.out_dir = out_dir;
  return t;
}

std::vector<Sample> synthetic_val_set(const RunConfig& cfg) {
  // Seeds start past the training range so the two sets never share a scene.
  return make_synthetic_dataset(cfg.val_count, cfg.synthetic_seed + static_cast<std::uint64_t>(cfg.synthetic_count),
                                cfg.synth);
}

std::string sanitize(const std::string& name) {
  std::string s;
  for (char c : name) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '+';
    s += keep ? c : '_';
  }
  return s;
}

double query_score(const Predictions& p, Index batch, Index q) {
  const Index queries = p.logits.size(1), classes = p.logits.size(2);
  const auto logits = p.logits.data();
  double best = -1e300;
  for (Index c = 0; c < classes; ++c)
    best = std::max(best, static_cast<double>(logits[static_cast<std::size_t>((batch * queries + q) * classes + c)]));
  const double prob = 1.0 / (1.0 + std::exp(-best));
  const double sigma = std::exp(static_cast<double>(p.log_sigma.data()[static_cast<std::size_t>(batch * queries + q)]));
  return prob * std::exp(-sigma);
}

void print_report_summary(std::ostream& os, const geo::EvalReport& report) {
  for (const auto& row : report.rows) {
    os << geo::category_name(row.category) << ' ' << geo::difficulty_name(row.difficulty) << ' '
       << geo::iou_kind_name(row.metric) << '@' << geo::format_number(row.iou_threshold) << ' '
       << fixed4(row.result.ap) << '\n';
  }
}

std::unique_ptr<Detector> load_model(const RunConfig& cfg) {
  auto model = std::make_unique<Detector>(cfg.model, cfg.seed);
  load_checkpoint(cfg.checkpoint_path(), *model);
  model->eval();
  return model;
}

}  // namespace

void write_provenance(const fs::path& dir, const CommandContext& ctx) {
  fs::create_directories(dir);
  geo::write_text_file(dir / "config.txt", ctx.config_text);
  geo::write_text_file(dir / "config.resolved.txt", serialize_run_config(ctx.cfg));
  geo::write_text_file(dir / "VERSION", std::string(version_string()) + "\n");
}

int threads_from_env() {
  const char* v = std::getenv("MDNX_THREADS");
  if (!v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) return 1;
  return static_cast<int>(std::min<long>(n, 256));
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::clamp<long>(threads, 1, static_cast<long>(std::max<std::size_t>(n, 1))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr first_error;
  auto work = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= n || first_error) return;
        i = next++;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<Sample> load_training_data(const RunConfig& cfg) {
  if (cfg.source == DataSource::kKitti) {
    if (cfg.data_dir.empty()) throw ConfigError("data.dir is required when data.source = kitti");
    if (!fs::is_directory(cfg.data_dir)) throw ConfigError("data.dir does not exist: " + cfg.data_dir.string());
    return load_kitti_dir(cfg.data_dir);
  }
  return make_synthetic_dataset(cfg.synthetic_count, cfg.synthetic_seed, cfg.synth);
}

std::vector<Sample> load_eval_data(const RunConfig& cfg) {
  if (cfg.source == DataSource::kSynthetic && cfg.val_count > 0) return synthetic_val_set(cfg);
  return load_training_data(cfg);
}

std::vector<geo::Annotation> predict_parallel(Detector& model, const std::vector<Sample>& data,
                                              const DecodeOptions& opts, int threads) {
  const bool was_training = model.training();
  model.eval();
  std::vector<geo::Annotation> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    NoGradGuard guard;
    const ModelOutput res = model.forward(stack_images({&data[i]}));
    out[i].objects = decode_to_boxes(res.layers.back(), 0, data[i].calib, opts);
  });
  model.train(was_training);
  return out;
}

// ---- ablation ----

const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> axes = {"query_strategy", "encoder", "sdc_counts", "pointwise", "pos_embed"};
  return axes;
}

std::vector<AblationVariant> ablation_variants(const std::string& axis) {
  std::vector<AblationVariant> rows;
  if (axis == "query_strategy") {
    for (auto s : {QueryStrategy::kLCenter, QueryStrategy::kLCenterEncBox, QueryStrategy::kEncCenter,
                   QueryStrategy::kEncCenterEncBox})
      rows.push_back({to_string(s), [s](ModelConfig& m) { m.strategy = s; }});
  } else if (axis == "encoder") {
    for (auto e : {EncoderVariant::kRt, EncoderVariant::kMonoDetr, EncoderVariant::kHybridL, EncoderVariant::kHybrid})
      rows.push_back({to_string(e), [e](ModelConfig& m) { m.encoder = e; }});
  } else if (axis == "sdc_counts") {
    const std::array<std::array<Index, 3>, 4> grid = {{{2, 2, 4}, {1, 1, 2}, {3, 3, 6}, {4, 4, 6}}};
    for (const auto& g : grid) {
      const std::string name =
          "(" + std::to_string(g[0]) + "," + std::to_string(g[1]) + "," + std::to_string(g[2]) + ")";
      rows.push_back({name, [g](ModelConfig& m) {
                        m.depth = DepthVariant::kA;
                        m.sdc_counts = g;
                      }});
    }
  } else if (axis == "pointwise") {
    // (SDC point-wise deleted, RGFI point-wise deleted)
    const std::array<std::pair<bool, bool>, 4> grid = {{{false, false}, {true, false}, {false, true}, {true, true}}};
    for (const auto& [del_sdc, del_rgfi] : grid) {
      const std::string name = std::string("sdc-") + (del_sdc ? "deleted" : "kept") + ",rgfi-" +
                               (del_rgfi ? "deleted" : "kept");
      rows.push_back({name, [del_sdc = del_sdc, del_rgfi = del_rgfi](ModelConfig& m) {
                        m.depth = DepthVariant::kA;
                        m.sdc_pointwise = !del_sdc;
                        m.rgfi_pointwise = !del_rgfi;
                      }});
    }
  } else if (axis == "pos_embed") {
    for (auto p : {PosEmbedKind::kSinCos3d, PosEmbedKind::kSinCos2d, PosEmbedKind::kMeterWise, PosEmbedKind::kKBin})
      rows.push_back({to_string(p), [p](ModelConfig& m) { m.query_pos_embed = p; }});
  } else {
    std::string valid;
    for (const auto& a : ablation_axes()) valid += (valid.empty() ? "" : ", ") + a;
    throw ConfigError("unknown ablation axis '" + axis + "' (valid: " + valid + ")");
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows, const std::vector<double>& iou_thresholds) {
  std::string s = "variant";
  for (double t : iou_thresholds)
    for (auto d : {geo::Difficulty::kEasy, geo::Difficulty::kModerate, geo::Difficulty::kHard})
      s += "\tAP3D@" + geo::format_number(t) + " " + geo::difficulty_name(d);
  s += '\n';
  for (const auto& r : rows) {
    s += r.variant;
    for (double ap : r.ap) s += '\t' + fixed4(ap);
    s += '\n';
  }
  return s;
}

// ---- heatmap ----

geo::Rgb heat_color(int index) {
  const double t = std::clamp(index, 0, 255) / 255.0;
  // blue -> cyan -> green -> yellow -> red
  static constexpr double stops[5][3] = {{0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}};
  const double pos = t * 4;
  const int k = std::min(3, static_cast<int>(pos));
  const double f = pos - k;
  geo::Rgb c{};
  for (int j = 0; j < 3; ++j)
    c[static_cast<std::size_t>(j)] =
        static_cast<std::uint8_t>(std::lround(stops[k][j] + f * (stops[k + 1][j] - stops[k][j])));
  return c;
}

std::vector<double> top_query_attention(const ModelOutput& out, Index batch, int count) {
  const Tensor& w = out.visual_weights;  // [N, heads, Q, h*w]
  const Index heads = w.size(1), queries = w.size(2), cells = w.size(3);
  if (batch < 0 || batch >= w.size(0)) throw ContractError("top_query_attention: batch out of range");
  std::vector<std::pair<double, Index>> scored;
  for (Index q = 0; q < queries; ++q) scored.emplace_back(query_score(out.layers.back(), batch, q), q);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const Index k = std::clamp<Index>(count, 1, queries);
  std::vector<double> map(static_cast<std::size_t>(cells), 0.0);
  const auto data = w.data();
  for (Index r = 0; r < k; ++r) {
    const Index q = scored[static_cast<std::size_t>(r)].second;
    for (Index h = 0; h < heads; ++h) {
      const auto base = static_cast<std::size_t>(((batch * heads + h) * queries + q) * cells);
      for (Index c = 0; c < cells; ++c) map[static_cast<std::size_t>(c)] += data[base + static_cast<std::size_t>(c)];
    }
  }
  const double norm = static_cast<double>(k * heads);
  for (double& v : map) v /= norm;
  return map;
}

geo::Image render_heatmap(const geo::Image& image, const std::vector<double>& attention, Index grid_h, Index grid_w,
                          int padded_w, int padded_h) {
  if (static_cast<Index>(attention.size()) != grid_h * grid_w || grid_h < 1 || grid_w < 1)
    throw ContractError("render_heatmap: attention size does not match the grid");
  const double peak = *std::max_element(attention.begin(), attention.end());
  const double sx = static_cast<double>(grid_w) / padded_w, sy = static_cast<double>(grid_h) / padded_h;
  auto at = [&](Index y, Index x) {
    y = std::clamp<Index>(y, 0, grid_h - 1);
    x = std::clamp<Index>(x, 0, grid_w - 1);
    return attention[static_cast<std::size_t>(y * grid_w + x)];
  };
  geo::Image out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    // Cell centers sit at (i + 0.5) / s in pixel coordinates.
    const double gy = (y + 0.5) * sy - 0.5;
    const auto y0 = static_cast<Index>(std::floor(gy));
    const double fy = gy - y0;
    for (int x = 0; x < image.width; ++x) {
      const double gx = (x + 0.5) * sx - 0.5;
      const auto x0 = static_cast<Index>(std::floor(gx));
      const double fx = gx - x0;
      const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                       fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
      const int idx = peak > 0 ? static_cast<int>(std::lround(std::clamp(v / peak, 0.0, 1.0) * 255)) : 0;
      const geo::Rgb heat = heat_color(idx);
      const geo::Rgb px = image.at(x, y);
      geo::Rgb blended{};
      for (std::size_t j = 0; j < 3; ++j)
        blended[j] = static_cast<std::uint8_t>(std::lround(0.5 * px[j] + 0.5 * heat[j]));
      out.set(x, y, blended);
    }
  }
  return out;
}

// ---- commands ----

int cmd_train(CommandContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const std::vector<Sample> data = load_training_data(cfg);
  write_provenance(cfg.output_dir, ctx);
  Detector model(cfg.model, cfg.seed);
  Trainer trainer(model, train_config_for(cfg, cfg.output_dir), cfg.loss_weights());
  auto& os = out_of(ctx);
  os << "training on " << data.size() << " images, " << model.parameter_count() << " parameters\n";
  const TrainResult result = trainer.fit(data, [&](const StepMetrics& m) {
    os << "step " << m.step << " epoch " << m.epoch << " loss " << geo::format_number(m.overall) << '\n';
  });
  os << "done: " << result.steps.size() << " steps, checkpoint " << (cfg.output_dir / "model.ckpt").string() << '\n';
  return kExitOk;
}

int cmd_eval(CommandContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const fs::path dir = cfg.output_dir / "eval";
  std::vector<Sample> data;
  std::vector<geo::Annotation> preds;
  std::vector<std::string> missing;
  if (!cfg.pred_dir.empty()) {
    if (!fs::is_directory(cfg.pred_dir)) throw ConfigError("eval.pred_dir does not exist: " + cfg.pred_dir.string());
    if (cfg.source != DataSource::kKitti) throw ConfigError("eval.pred_dir needs data.source = kitti");
    data = load_training_data(cfg);
    for (const auto& s : data) {
      const fs::path p = cfg.pred_dir / (s.id + ".txt");
      geo::Annotation ann;
      if (fs::exists(p)) ann = geo::parse_kitti_label(geo::read_text_file(p));
      else missing.push_back("pred:" + s.id);
      preds.push_back(std::move(ann));
    }
  } else {
    data = load_eval_data(cfg);
    const auto model = load_model(cfg);
    preds = predict_parallel(*model, data, cfg.decode, ctx.threads);
  }
  geo::EvalReport report = evaluate_samples(data, preds, cfg.iou_thresholds, cfg.categories);
  report.missing = missing;
  write_provenance(cfg.output_dir, ctx);
  geo::write_report(report, dir);
  if (cfg.pred_dir.empty()) {
    fs::create_directories(dir / "pred");
    for (std::size_t i = 0; i < data.size(); ++i)
      geo::write_text_file(dir / "pred" / (data[i].id + ".txt"), geo::serialize_kitti_label(preds[i]));
  }
  for (const auto& m : missing) err_of(ctx) << "missing " << m << '\n';
  print_report_summary(out_of(ctx), report);
  return kExitOk;
}

int cmd_infer(CommandContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.image_dir.empty()) throw ConfigError("infer.image_dir is required");
  if (!fs::is_directory(cfg.image_dir)) throw ConfigError("infer.image_dir does not exist: " + cfg.image_dir.string());
  const fs::path calib_dir = cfg.calib_dir.empty() ? cfg.image_dir.parent_path() / "calib" : cfg.calib_dir;
  const auto model = load_model(cfg);
  const auto ids = list_image_ids(cfg.image_dir);
  const fs::path pred_dir = cfg.output_dir / "pred";
  write_provenance(cfg.output_dir, ctx);
  fs::create_directories(pred_dir);

  std::vector<std::string> failures(ids.size());
  std::vector<std::optional<geo::Annotation>> results(ids.size());
  parallel_for(ids.size(), ctx.threads, [&](std::size_t i) {
    Sample s;
    try {
      const fs::path png = cfg.image_dir / (ids[i] + ".png");
      const geo::Image img = geo::read_image(fs::exists(png) ? png : cfg.image_dir / (ids[i] + ".ppm"));
      s.image = pad_image(geo::image_to_tensor(img), 32);
      s.calib = geo::parse_kitti_calib(geo::read_text_file(calib_dir / (ids[i] + ".txt")));
      s.calib.width = img.width;
      s.calib.height = img.height;
    } catch (const Error& e) {
      failures[i] = e.what();
      return;
    }
    NoGradGuard guard;
    const ModelOutput res = model->forward(stack_images({&s}));
    geo::Annotation ann;
    ann.objects = decode_to_boxes(res.layers.back(), 0, s.calib, cfg.decode);
    results[i] = std::move(ann);
  });

  int skipped = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!results[i]) {
      err_of(ctx) << "skipped " << ids[i] << ": " << failures[i] << '\n';
      ++skipped;
      continue;
    }
    geo::write_text_file(pred_dir / (ids[i] + ".txt"), geo::serialize_kitti_label(*results[i]));
  }
  out_of(ctx) << "wrote " << (ids.size() - static_cast<std::size_t>(skipped)) << " prediction files, skipped "
              << skipped << '\n';
  return skipped > 0 && ctx.strict ? kExitUsage : kExitOk;
}

int cmd_ablate(CommandContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.ablate_axis.empty()) throw ConfigError("ablate.axis is required");
  const auto variants = ablation_variants(cfg.ablate_axis);
  const std::vector<Sample> train_data = load_training_data(cfg);
  const std::vector<Sample> eval_data = load_eval_data(cfg);
  const fs::path dir = cfg.output_dir / ("ablate_" + cfg.ablate_axis);
  write_provenance(cfg.output_dir, ctx);
  const int category = cfg.categories.front();
  std::vector<AblationRow> rows;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    RunConfig vc = cfg;
    variants[v].apply(vc.model);
    vc.model.validate();
    const fs::path vdir = dir / (std::to_string(v) + "_" + sanitize(variants[v].name));
    Detector model(vc.model, vc.seed);
    Trainer trainer(model, train_config_for(vc, vdir), vc.loss_weights());
    trainer.fit(train_data);
    const auto preds = predict_parallel(model, eval_data, vc.decode, ctx.threads);
    const geo::EvalReport report = evaluate_samples(eval_data, preds, vc.iou_thresholds, {category});
    AblationRow row{variants[v].name, {}};
    for (double t : vc.iou_thresholds)
      for (auto d : {geo::Difficulty::kEasy, geo::Difficulty::kModerate, geo::Difficulty::kHard})
        row.ap.push_back(report.find(category, d, geo::IouKind::k3d, t).result.ap);
    rows.push_back(std::move(row));
    out_of(ctx) << "variant " << variants[v].name << " done\n";
  }
  const std::string table = ablation_table(rows, cfg.iou_thresholds);
  geo::write_text_file(dir / "table.tsv", table);
  out_of(ctx) << table;
  return kExitOk;
}

int cmd_heatmap(CommandContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.heatmap_image.empty()) throw ConfigError("heatmap.image is required");
  const auto model = load_model(cfg);
  const geo::Image img = geo::read_image(cfg.heatmap_image);
  Sample s;
  s.image = pad_image(geo::image_to_tensor(img), 32);
  NoGradGuard guard;
  const ModelOutput res = model->forward(stack_images({&s}));
  const auto attention = top_query_attention(res, 0, cfg.heatmap_queries);
  const geo::Image heat = render_heatmap(img, attention, res.grid_h, res.grid_w, static_cast<int>(s.image.size(2)),
                                         static_cast<int>(s.image.size(1)));
  write_provenance(cfg.output_dir, ctx);
  geo::write_ppm(heat, cfg.output_dir / "heatmap.ppm");
  out_of(ctx) << "wrote " << (cfg.output_dir / "heatmap.ppm").string() << '\n';
  return kExitOk;
}

int cmd_synth(CommandContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  write_synthetic_dataset(cfg.output_dir, cfg.synthetic_count, cfg.synthetic_seed, cfg.synth);
  write_provenance(cfg.output_dir, ctx);
  out_of(ctx) << "wrote " << cfg.synthetic_count << " scenes to " << cfg.output_dir.string() << '\n';
  return kExitOk;
}

}  // namespace mdnx
