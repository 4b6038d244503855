#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mdnx/core/tensor.hpp"

namespace mdnx {

struct MatchResult {
  std::vector<std::pair<Index, Index>> pairs;  // (prediction, ground truth), sorted by prediction
  std::vector<Index> unmatched;                 // predictions without a partner
  double total_cost = 0;
};

/// Minimum-total-cost assignment of rows (predictions) to columns (ground
/// truth) by Kuhn-Munkres with potentials. Rectangular inputs match
/// min(rows, cols) pairs. Throws ContractError on non-finite costs.
MatchResult hungarian_match(const Eigen::MatrixXd& cost);

}  // namespace mdnx
