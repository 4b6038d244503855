#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "mdnx/core/tensor.hpp"

namespace mdnx::testing {

/// Minimum assignment cost by enumerating every permutation of the larger side.
inline double brute_force_cost(const Eigen::MatrixXd& c) {
  // Assign every index of the smaller side to a distinct index of the larger.
  const bool rows_small = c.rows() <= c.cols();
  const Index small = rows_small ? c.rows() : c.cols(), large = rows_small ? c.cols() : c.rows();
  std::vector<Index> perm(static_cast<std::size_t>(large));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0;
    for (Index i = 0; i < small; ++i) total += rows_small ? c(i, perm[static_cast<std::size_t>(i)]) : c(perm[static_cast<std::size_t>(i)], i);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace mdnx::testing
