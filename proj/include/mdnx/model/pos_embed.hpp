#pragma once

#include <memory>
#include <span>
#include <vector>

#include "mdnx/core/nn.hpp"
#include "mdnx/model/config.hpp"

namespace mdnx {

inline constexpr double kPosTemperature = 10000.0;

/// Sinusoidal code of one normalized coordinate over `channels` outputs laid
/// out as [sin f_0 .. sin f_{s-1}, cos f_0 .. cos f_{c-1}] with s = ceil(n/2),
/// c = floor(n/2) and f_i = 2*pi*v / T^(2i/n).
void sincos_encode(double v, Index channels, std::span<Real> out);

/// Row per coordinate vector; each coordinate gets dim / coords.size() channels
/// (the last one absorbs any remainder). Throws ConfigError when dim is not
/// divisible by the coordinate count.
Tensor sincos_embed(const std::vector<std::vector<double>>& coords, Index dim);

/// [1, h*w, dim] 2D code of the normalized cell centers of an h x w grid.
Tensor grid_sincos(Index h, Index w, Index dim);

/// Normalized cell centers of an h x w grid, row-major, as (x, y).
std::vector<std::array<double, 2>> grid_centers(Index h, Index w);

/// LID edges d_i = d_min + (d_max - d_min) * i (i + 1) / (k (k + 1)), i = 0..k.
std::vector<double> lid_edges(Index k, double d_min, double d_max);
/// Foreground bin of a depth, clamped to [0, k-1].
Index depth_to_bin(double depth, const std::vector<double>& edges);
double bin_center(Index bin, const std::vector<double>& edges);

/// Learnable embedding table. Lookups clamp indices into range.
class EmbeddingTable : public Module {
 public:
  EmbeddingTable(Index rows, Index dim, Rng& rng);
  /// indices: N rows of L entries -> [N, L, dim]
  Tensor forward(const std::vector<std::vector<Index>>& indices) const;
  Index rows() const { return table.size(0); }

  Tensor table;
};

}  // namespace mdnx
