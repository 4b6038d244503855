#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mdnx/core/tensor.hpp"

namespace mdnx::detail {

inline bool tracking(const Tensor& t) { return t.defined() && t.requires_grad() && grad_enabled(); }

template <class... Ts>
bool any_tracking(const Ts&... ts) {
  return grad_enabled() && (... || (ts.defined() && ts.requires_grad()));
}

inline void check_finite(const std::vector<Real>& v, const char* op) {
  for (Real x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

inline Tensor make_output(Shape shape, std::vector<Real> data, const char* op) {
  check_finite(data, op);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

inline void record(const Tensor& out, Tape::BackwardFn fn) { Tape::current().record(out.impl(), std::move(fn)); }

inline Index normalize_axis(Index axis, Index rank) {
  const Index a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return a;
}

/// Splits a shape around `axis` into (outer, axis length, inner) extents.
struct AxisSplit {
  Index outer = 1;
  Index len = 1;
  Index inner = 1;
};

inline AxisSplit split_at(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.len = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace mdnx::detail
