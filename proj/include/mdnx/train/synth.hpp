#pragma once

#include <cstdint>
#include <vector>

#include "mdnx/geometry/image.hpp"
#include "mdnx/geometry/kitti.hpp"

namespace mdnx {

struct SynthConfig {
  int width = 128;
  int height = 128;
  double focal_scale = 1.5;  // f = focal_scale * width
  int min_objects = 1;
  int max_objects = 5;
  double depth_min = 4.0;
  double depth_max = 40.0;
  double camera_height = 1.65;  // ground plane sits at y = camera_height
  std::vector<int> categories = {geo::kCar};
  int max_tries = 100;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

struct SyntheticScene {
  geo::Image image;
  geo::Annotation annotation;
  geo::CameraCalib calib;
  std::uint64_t seed = 0;
};

/// Ranges of (h, w, l) in meters sampled for a detection class.
struct DimRange {
  double h[2], w[2], l[2];
};
DimRange dim_range(int category);

/// Boxes on a flat ground plane rendered as flat-shaded cuboids: brightness
/// falls with depth, the heading face has its own tint, and a seeded noise
/// texture covers the background. Labels carry truncation (fraction of the
/// projected box outside the image) and occlusion levels from an id buffer.
SyntheticScene synth_scene(std::uint64_t seed, const SynthConfig& cfg);

}  // namespace mdnx
