#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mdnx/core/tensor.hpp"

namespace mdnx::geo {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit interleaved RGB, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, Rgb fill = {0, 0, 0});

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);  // ignores out-of-range pixels
};

/// Detects P6 PPM or PNG from the file's leading bytes.
Image read_image(const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);
void write_ppm(const Image& img, const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);

void draw_line(Image& img, double x0, double y0, double x1, double y1, Rgb c);

/// [3, H, W] tensor scaled to [0, 1].
Tensor image_to_tensor(const Image& img);

}  // namespace mdnx::geo
