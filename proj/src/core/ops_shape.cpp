#include <numeric>

#include "mdnx/core/ops.hpp"
#include "op_util.hpp"

namespace mdnx {

using detail::make_output;
using detail::normalize_axis;
using detail::record;
using detail::split_at;
using detail::tracking;

Tensor sum(const Tensor& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  Tensor y = make_output({1}, {s}, "sum");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi] {
      auto& g = xi->grad_buffer();
      const Real go = yi->grad[0];
      for (auto& v : g) v += go;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), Real(1) / static_cast<Real>(x.numel())); }

Tensor sum(const Tensor& x, Index axis, bool keepdim) {
  axis = normalize_axis(axis, x.dim());
  const auto s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[static_cast<std::size_t>(axis)] = 1;
  } else {
    out_shape.erase(out_shape.begin() + axis);
    if (out_shape.empty()) out_shape = {1};
  }
  const auto& xd = x.impl()->data;
  std::vector<Real> out(static_cast<std::size_t>(s.outer * s.inner), Real(0));
  for (Index o = 0; o < s.outer; ++o)
    for (Index a = 0; a < s.len; ++a)
      for (Index i = 0; i < s.inner; ++i) out[o * s.inner + i] += xd[(o * s.len + a) * s.inner + i];
  Tensor y = make_output(std::move(out_shape), std::move(out), "sum_axis");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, s] {
      auto& g = xi->grad_buffer();
      for (Index o = 0; o < s.outer; ++o)
        for (Index a = 0; a < s.len; ++a)
          for (Index i = 0; i < s.inner; ++i) g[(o * s.len + a) * s.inner + i] += yi->grad[o * s.inner + i];
    });
  }
  return y;
}

Tensor mean(const Tensor& x, Index axis, bool keepdim) {
  const Index len = x.size(axis);
  return mul_scalar(sum(x, axis, keepdim), Real(1) / static_cast<Real>(len));
}

Tensor reshape(const Tensor& x, Shape shape) {
  // a single -1 entry is inferred
  Index known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw DimensionError("reshape: more than one inferred axis");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor y = make_output(std::move(shape), x.impl()->data, "reshape");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi] {
      auto& g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
    });
  }
  return y;
}

namespace {

// For each output flat index, the corresponding input flat index.
std::vector<Index> permutation_map(const Shape& in, const std::vector<Index>& order, Shape& out) {
  const std::size_t r = in.size();
  std::vector<Index> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  out.resize(r);
  std::vector<Index> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = in[static_cast<std::size_t>(order[i])];
    src_stride[i] = in_strides[static_cast<std::size_t>(order[i])];
  }
  const Index n = shape_numel(in);
  std::vector<Index> map(static_cast<std::size_t>(n));
  std::vector<Index> counter(r, 0);
  Index src = 0;
  for (Index i = 0; i < n; ++i) {
    map[static_cast<std::size_t>(i)] = src;
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      src += src_stride[d];
      if (counter[d] < out[d]) break;
      src -= src_stride[d] * out[d];
      counter[d] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<Index>& order) {
  if (static_cast<Index>(order.size()) != x.dim()) {
    throw DimensionError("permute: order rank does not match " + shape_str(x.shape()));
  }
  std::vector<bool> seen(order.size(), false);
  for (Index o : order) {
    if (o < 0 || o >= x.dim() || seen[static_cast<std::size_t>(o)]) throw DimensionError("permute: invalid order");
    seen[static_cast<std::size_t>(o)] = true;
  }
  Shape out_shape;
  auto map = permutation_map(x.shape(), order, out_shape);
  const auto& xd = x.impl()->data;
  std::vector<Real> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[static_cast<std::size_t>(map[i])];
  Tensor y = make_output(std::move(out_shape), std::move(out), "permute");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, map = std::move(map)] {
      auto& g = xi->grad_buffer();
      for (std::size_t i = 0; i < map.size(); ++i) g[static_cast<std::size_t>(map[i])] += yi->grad[i];
    });
  }
  return y;
}

Tensor transpose(const Tensor& x, Index a, Index b) {
  a = normalize_axis(a, x.dim());
  b = normalize_axis(b, x.dim());
  std::vector<Index> order(static_cast<std::size_t>(x.dim()));
  std::iota(order.begin(), order.end(), Index(0));
  std::swap(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, Index axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  axis = normalize_axis(axis, parts[0].dim());
  Shape out_shape = parts[0].shape();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.dim() != parts[0].dim()) throw DimensionError("concat: rank mismatch");
    for (Index d = 0; d < p.dim(); ++d) {
      if (d != axis && p.size(d) != out_shape[static_cast<std::size_t>(d)]) {
        throw DimensionError("concat: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
      }
    }
    total += p.size(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total;
  const auto s = split_at(out_shape, axis);
  std::vector<Real> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const Index len = p.size(axis);
    const auto& pd = p.impl()->data;
    for (Index o = 0; o < s.outer; ++o) {
      std::copy_n(pd.begin() + o * len * s.inner, len * s.inner, out.begin() + (o * total + off) * s.inner);
    }
    off += len;
  }
  Tensor y = make_output(std::move(out_shape), std::move(out), "concat");
  bool any = false;
  for (const auto& p : parts) any = any || tracking(p);
  if (any) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    TensorImpl* yi = y.impl().get();
    record(y, [impls, offsets, yi, s, total, axis] {
      for (std::size_t k = 0; k < impls.size(); ++k) {
        if (!impls[k]->requires_grad) continue;
        auto& g = impls[k]->grad_buffer();
        const Index len = impls[k]->shape[static_cast<std::size_t>(axis)];
        for (Index o = 0; o < s.outer; ++o)
          for (Index j = 0; j < len * s.inner; ++j)
            g[o * len * s.inner + j] += yi->grad[(o * total + offsets[k]) * s.inner + j];
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& x, Index axis, Index start, Index length) {
  axis = normalize_axis(axis, x.dim());
  const auto s = split_at(x.shape(), axis);
  if (start < 0 || length <= 0 || start + length > s.len) {
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") out of range for " +
                         shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  const auto& xd = x.impl()->data;
  std::vector<Real> out(static_cast<std::size_t>(s.outer * length * s.inner));
  for (Index o = 0; o < s.outer; ++o) {
    std::copy_n(xd.begin() + (o * s.len + start) * s.inner, length * s.inner, out.begin() + o * length * s.inner);
  }
  Tensor y = make_output(std::move(out_shape), std::move(out), "slice");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, s, start, length] {
      auto& g = xi->grad_buffer();
      for (Index o = 0; o < s.outer; ++o)
        for (Index j = 0; j < length * s.inner; ++j) g[(o * s.len + start) * s.inner + j] += yi->grad[o * length * s.inner + j];
    });
  }
  return y;
}

Tensor index_select(const Tensor& x, Index axis, const std::vector<Index>& indices) {
  axis = normalize_axis(axis, x.dim());
  const auto s = split_at(x.shape(), axis);
  for (Index k : indices) {
    if (k < 0 || k >= s.len) throw DimensionError("index_select: index " + std::to_string(k) + " out of range");
  }
  if (indices.empty()) throw DimensionError("index_select: empty index list");
  const Index m = static_cast<Index>(indices.size());
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = m;
  const auto& xd = x.impl()->data;
  std::vector<Real> out(static_cast<std::size_t>(s.outer * m * s.inner));
  for (Index o = 0; o < s.outer; ++o)
    for (Index j = 0; j < m; ++j)
      std::copy_n(xd.begin() + (o * s.len + indices[static_cast<std::size_t>(j)]) * s.inner, s.inner,
                  out.begin() + (o * m + j) * s.inner);
  Tensor y = make_output(std::move(out_shape), std::move(out), "index_select");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, s, m, indices] {
      auto& g = xi->grad_buffer();
      for (Index o = 0; o < s.outer; ++o)
        for (Index j = 0; j < m; ++j)
          for (Index i = 0; i < s.inner; ++i)
            g[(o * s.len + indices[static_cast<std::size_t>(j)]) * s.inner + i] += yi->grad[(o * m + j) * s.inner + i];
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::vector<Index>>& indices) {
  if (x.dim() != 3 || static_cast<Index>(indices.size()) != x.size(0)) {
    throw DimensionError("gather_rows expects [N, T, D] with one index list per batch, got " + shape_str(x.shape()));
  }
  const Index n = x.size(0), t = x.size(1), d = x.size(2);
  const Index q = static_cast<Index>(indices[0].size());
  for (const auto& row : indices) {
    if (static_cast<Index>(row.size()) != q) throw DimensionError("gather_rows: ragged index lists");
    for (Index k : row) {
      if (k < 0 || k >= t) throw DimensionError("gather_rows: index out of range");
    }
  }
  const auto& xd = x.impl()->data;
  std::vector<Real> out(static_cast<std::size_t>(n * q * d));
  for (Index b = 0; b < n; ++b)
    for (Index j = 0; j < q; ++j)
      std::copy_n(xd.begin() + (b * t + indices[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)]) * d, d,
                  out.begin() + (b * q + j) * d);
  Tensor y = make_output({n, q, d}, std::move(out), "gather_rows");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, indices, n, t, q, d] {
      auto& g = xi->grad_buffer();
      for (Index b = 0; b < n; ++b)
        for (Index j = 0; j < q; ++j) {
          const Index src = indices[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)];
          for (Index c = 0; c < d; ++c) g[(b * t + src) * d + c] += yi->grad[(b * q + j) * d + c];
        }
    });
  }
  return y;
}

}  // namespace mdnx
