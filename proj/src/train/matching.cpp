#include "mdnx/train/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mdnx {

namespace {

// Assigns every row of an n x m matrix (n <= m) to a distinct column.
// Returns the column of each row.
std::vector<Index> assign_rows(const Eigen::MatrixXd& a) {
  const Index n = a.rows(), m = a.cols();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0), v(static_cast<std::size_t>(m + 1), 0);
  std::vector<Index> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> col(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= m; ++j)
    if (p[static_cast<std::size_t>(j)] != 0) col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return col;
}

}  // namespace

MatchResult hungarian_match(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw ContractError("hungarian_match: cost matrix contains non-finite entries");
  MatchResult r;
  const Index rows = cost.rows(), cols = cost.cols();
  if (rows == 0 || cols == 0) {
    for (Index i = 0; i < rows; ++i) r.unmatched.push_back(i);
    return r;
  }
  if (rows <= cols) {
    const auto col = assign_rows(cost);
    for (Index i = 0; i < rows; ++i) r.pairs.emplace_back(i, col[static_cast<std::size_t>(i)]);
  } else {
    const auto row = assign_rows(cost.transpose());
    for (Index j = 0; j < cols; ++j) r.pairs.emplace_back(row[static_cast<std::size_t>(j)], j);
    std::sort(r.pairs.begin(), r.pairs.end());
    std::vector<char> taken(static_cast<std::size_t>(rows), 0);
    for (const auto& pr : r.pairs) taken[static_cast<std::size_t>(pr.first)] = 1;
    for (Index i = 0; i < rows; ++i)
      if (!taken[static_cast<std::size_t>(i)]) r.unmatched.push_back(i);
  }
  for (const auto& [i, j] : r.pairs) r.total_cost += cost(i, j);
  return r;
}

}  // namespace mdnx
