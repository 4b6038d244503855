#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mdnx/core/rng.hpp"
#include "mdnx/core/tensor.hpp"

namespace mdnx::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  int coords_checked = 0;
};

/// Compares reverse-mode gradients of a scalar-valued `fn` with central
/// differences. `fn` must rebuild its graph from `inputs` on every call.
/// When `coords_per_input` > 0 only that many randomly chosen coordinates of
/// each input are perturbed. Relative error uses max(|a|, |n|, floor) as the
/// denominator so that entries which are zero up to rounding do not dominate.
inline GradCheckResult grad_check(const std::function<Tensor()>& fn, std::vector<Tensor> inputs, double eps = 1e-4,
                                  int coords_per_input = -1, std::uint64_t seed = 7, double floor = 1e-6) {
  Tape::current().reset();
  for (auto& t : inputs) t.zero_grad();
  Tensor loss = fn();
  backward(loss);
  std::vector<std::vector<Real>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(static_cast<std::size_t>(t.numel()), Real(0));
    }
  }
  Tape::current().reset();

  Rng rng(seed);
  GradCheckResult res;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    std::vector<Index> coords;
    if (coords_per_input <= 0 || coords_per_input >= static_cast<int>(data.size())) {
      for (Index i = 0; i < static_cast<Index>(data.size()); ++i) coords.push_back(i);
    } else {
      for (int c = 0; c < coords_per_input; ++c) coords.push_back(rng.below(static_cast<Index>(data.size())));
    }
    for (Index i : coords) {
      const Real orig = data[i];
      data[i] = orig + eps;
      const double up = fn().item();
      data[i] = orig - eps;
      const double down = fn().item();
      data[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      res.max_rel_error = std::max(res.max_rel_error, abs_err / denom);
      ++res.coords_checked;
    }
  }
  return res;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
  std::vector<Real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
  auto t = Tensor::from_data(std::move(shape), std::move(v));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

}  // namespace mdnx::testing
