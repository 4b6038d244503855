#include "mdnx/train/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <numbers>

#include "mdnx/core/ops.hpp"

namespace mdnx {

namespace {

std::string scene_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", i);
  return buf;
}

}  // namespace

std::vector<Sample> make_synthetic_dataset(int count, std::uint64_t seed, const SynthConfig& cfg) {
  std::vector<Sample> out;
  for (int i = 0; i < count; ++i) {
    SyntheticScene s = synth_scene(seed + static_cast<std::uint64_t>(i), cfg);
    out.push_back({scene_id(i), pad_image(geo::image_to_tensor(s.image), 32), std::move(s.annotation), s.calib});
  }
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& dir, int count, std::uint64_t seed, const SynthConfig& cfg) {
  for (const char* sub : {"image_2", "label_2", "calib"}) std::filesystem::create_directories(dir / sub);
  for (int i = 0; i < count; ++i) {
    const SyntheticScene s = synth_scene(seed + static_cast<std::uint64_t>(i), cfg);
    const std::string id = scene_id(i);
    geo::write_png(s.image, dir / "image_2" / (id + ".png"));
    geo::write_text_file(dir / "label_2" / (id + ".txt"), geo::serialize_kitti_label(s.annotation));
    geo::write_text_file(dir / "calib" / (id + ".txt"), geo::serialize_kitti_calib(s.calib));
  }
}

std::vector<std::string> list_image_ids(const std::filesystem::path& image_dir) {
  std::vector<std::string> ids;
  for (const auto& e : std::filesystem::directory_iterator(image_dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".png" || ext == ".ppm") ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<Sample> load_kitti_dir(const std::filesystem::path& dir, bool with_labels) {
  const auto image_dir = dir / "image_2";
  if (!std::filesystem::is_directory(image_dir)) throw ConfigError("missing image directory: " + image_dir.string());
  std::vector<Sample> out;
  for (const auto& id : list_image_ids(image_dir)) {
    Sample s;
    s.id = id;
    const auto png = image_dir / (id + ".png");
    const geo::Image img = geo::read_image(std::filesystem::exists(png) ? png : image_dir / (id + ".ppm"));
    s.image = pad_image(geo::image_to_tensor(img), 32);
    s.calib = geo::parse_kitti_calib(geo::read_text_file(dir / "calib" / (id + ".txt")));
    s.calib.width = img.width;
    s.calib.height = img.height;
    if (with_labels) s.annotation = geo::parse_kitti_label(geo::read_text_file(dir / "label_2" / (id + ".txt")));
    out.push_back(std::move(s));
  }
  return out;
}

Tensor pad_image(const Tensor& image, Index multiple) {
  const Index c = image.size(0), h = image.size(1), w = image.size(2);
  const Index ph = (h + multiple - 1) / multiple * multiple, pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return image;
  std::vector<Real> v(static_cast<std::size_t>(c * ph * pw), 0);
  const auto src = image.data();
  for (Index k = 0; k < c; ++k)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        v[static_cast<std::size_t>((k * ph + y) * pw + x)] = src[static_cast<std::size_t>((k * h + y) * w + x)];
  return Tensor::from_data({c, ph, pw}, std::move(v));
}

Sample flip_sample(const Sample& s) {
  Sample f = s;
  const Index c = s.image.size(0), h = s.image.size(1), w = s.image.size(2);
  const double W = s.calib.width;
  // Mirror the valid region only; padding stays on the right.
  std::vector<Real> v(static_cast<std::size_t>(c * h * w), 0);
  const auto src = s.image.data();
  const Index valid = s.calib.width;
  for (Index k = 0; k < c; ++k)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < valid; ++x)
        v[static_cast<std::size_t>((k * h + y) * w + (valid - 1 - x))] = src[static_cast<std::size_t>((k * h + y) * w + x)];
  f.image = Tensor::from_data({c, h, w}, std::move(v));
  // P' = M P F with M mirroring image columns (u' = W - u) and F negating world x.
  for (int j = 0; j < 4; ++j) {
    const double sign = j == 0 ? -1.0 : 1.0;
    f.calib.P(0, j) = sign * (W * s.calib.P(2, j) - s.calib.P(0, j));
    f.calib.P(1, j) = sign * s.calib.P(1, j);
    f.calib.P(2, j) = sign * s.calib.P(2, j);
  }
  f.calib.validate();
  for (auto& o : f.annotation.objects) {
    o.box.location.x() = -o.box.location.x();
    o.box.yaw = geo::wrap_angle(std::numbers::pi - o.box.yaw);
    o.alpha = geo::wrap_angle(std::numbers::pi - o.alpha);
    const double x0 = o.bbox.x_min, x1 = o.bbox.x_max;
    o.bbox.x_min = W - x1;
    o.bbox.x_max = W - x0;
    o.bbox.xc = W - o.bbox.xc;
  }
  return f;
}

Tensor stack_images(const std::vector<const Sample*>& batch) {
  if (batch.empty()) throw ContractError("stack_images: empty batch");
  std::vector<Tensor> parts;
  const Shape shape = batch.front()->image.shape();
  for (const Sample* s : batch) {
    if (s->image.shape() != shape) {
      throw ConfigError("batch images differ in size: " + shape_str(shape) + " vs " + shape_str(s->image.shape()));
    }
    parts.push_back(reshape(s->image, {1, shape[0], shape[1], shape[2]}));
  }
  return parts.size() == 1 ? parts.front() : concat(parts, 0);
}

}  // namespace mdnx
