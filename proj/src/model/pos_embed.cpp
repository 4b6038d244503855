#include "mdnx/model/pos_embed.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mdnx {

void sincos_encode(double v, Index channels, std::span<Real> out) {
  const Index n_sin = (channels + 1) / 2;
  const Index n_cos = channels / 2;
  for (Index i = 0; i < n_sin; ++i) {
    const double f = 2 * std::numbers::pi * v / std::pow(kPosTemperature, 2.0 * i / channels);
    out[static_cast<std::size_t>(i)] = static_cast<Real>(std::sin(f));
  }
  for (Index i = 0; i < n_cos; ++i) {
    const double f = 2 * std::numbers::pi * v / std::pow(kPosTemperature, 2.0 * i / channels);
    out[static_cast<std::size_t>(n_sin + i)] = static_cast<Real>(std::cos(f));
  }
}

Tensor sincos_embed(const std::vector<std::vector<double>>& coords, Index dim) {
  if (coords.empty()) throw ContractError("sincos_embed needs at least one row");
  const Index k = static_cast<Index>(coords.front().size());
  if (k == 0 || dim % k != 0) {
    throw ConfigError("positional code of " + std::to_string(k) + " coordinates needs dim divisible by " +
                      std::to_string(k) + ", got " + std::to_string(dim));
  }
  const Index per = dim / k;
  std::vector<Real> data(coords.size() * static_cast<std::size_t>(dim));
  for (std::size_t r = 0; r < coords.size(); ++r)
    for (Index c = 0; c < k; ++c)
      sincos_encode(coords[r][static_cast<std::size_t>(c)], per,
                    std::span<Real>(data).subspan(r * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c * per),
                                                  static_cast<std::size_t>(per)));
  return Tensor::from_data({static_cast<Index>(coords.size()), dim}, std::move(data));
}

std::vector<std::array<double, 2>> grid_centers(Index h, Index w) {
  std::vector<std::array<double, 2>> out;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) out.push_back({(x + 0.5) / static_cast<double>(w), (y + 0.5) / static_cast<double>(h)});
  return out;
}

Tensor grid_sincos(Index h, Index w, Index dim) {
  std::vector<std::vector<double>> coords;
  for (const auto& c : grid_centers(h, w)) coords.push_back({c[0], c[1]});
  return reshape(sincos_embed(coords, dim), {1, h * w, dim});
}

std::vector<double> lid_edges(Index k, double d_min, double d_max) {
  if (k < 1) throw ConfigError("depth bin count must be at least 1");
  std::vector<double> e;
  for (Index i = 0; i <= k; ++i)
    e.push_back(d_min + (d_max - d_min) * static_cast<double>(i * (i + 1)) / static_cast<double>(k * (k + 1)));
  return e;
}

Index depth_to_bin(double depth, const std::vector<double>& edges) {
  const Index k = static_cast<Index>(edges.size()) - 1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), depth);
  const Index b = static_cast<Index>(it - edges.begin()) - 1;
  return std::clamp<Index>(b, 0, k - 1);
}

double bin_center(Index bin, const std::vector<double>& edges) {
  return 0.5 * (edges[static_cast<std::size_t>(bin)] + edges[static_cast<std::size_t>(bin + 1)]);
}

EmbeddingTable::EmbeddingTable(Index rows, Index dim, Rng& rng) {
  std::vector<Real> v(static_cast<std::size_t>(rows * dim));
  for (auto& x : v) x = static_cast<Real>(rng.normal());
  table = register_parameter("table", Tensor::from_data({rows, dim}, std::move(v)));
}

Tensor EmbeddingTable::forward(const std::vector<std::vector<Index>>& indices) const {
  const Index n = static_cast<Index>(indices.size());
  const Index l = indices.empty() ? 0 : static_cast<Index>(indices.front().size());
  std::vector<Index> flat;
  for (const auto& row : indices)
    for (Index i : row) flat.push_back(std::clamp<Index>(i, 0, rows() - 1));
  return reshape(index_select(table, 0, flat), {n, l, table.size(1)});
}

}  // namespace mdnx
