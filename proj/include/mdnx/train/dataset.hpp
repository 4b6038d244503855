#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdnx/geometry/image.hpp"
#include "mdnx/geometry/kitti.hpp"
#include "mdnx/train/synth.hpp"

namespace mdnx {

struct Sample {
  std::string id;
  Tensor image;  // [3, H, W] in [0, 1]
  geo::Annotation annotation;
  geo::CameraCalib calib;
};

/// Scenes seeded seed, seed + 1, ...; ids are zero-padded indices.
std::vector<Sample> make_synthetic_dataset(int count, std::uint64_t seed, const SynthConfig& cfg);

/// Writes image_2/<id>.png, label_2/<id>.txt and calib/<id>.txt.
void write_synthetic_dataset(const std::filesystem::path& dir, int count, std::uint64_t seed, const SynthConfig& cfg);

/// Reads a KITTI-style directory (image_2, calib and, when `with_labels`,
/// label_2). Images are zero-padded on the right and bottom to multiples of
/// 32, which leaves the calibration valid. Samples are ordered by id.
std::vector<Sample> load_kitti_dir(const std::filesystem::path& dir, bool with_labels = true);

/// Stems of image files (.png or .ppm) in a directory, sorted.
std::vector<std::string> list_image_ids(const std::filesystem::path& image_dir);

/// Pads [3, H, W] to multiples of `multiple` with zeros.
Tensor pad_image(const Tensor& image, Index multiple);

/// Horizontal mirror: pixel columns, principal point and x translation of the
/// calibration, and on the label side x, yaw, alpha and the 2D box.
Sample flip_sample(const Sample& s);

/// Stacks samples into [N, 3, H, W]; every image must share one size.
Tensor stack_images(const std::vector<const Sample*>& batch);

}  // namespace mdnx
