#include <algorithm>
#include <cmath>
#include <numbers>

#include "mdnx/core/ops.hpp"
#include "op_util.hpp"

namespace mdnx {

using detail::make_output;
using detail::record;
using detail::tracking;

namespace {

struct Broadcast {
  Shape out;
  std::vector<Index> stride_a;  // per output axis, 0 where broadcast
  std::vector<Index> stride_b;
  bool same = false;
};

std::vector<Index> contiguous_strides(const Shape& s) {
  std::vector<Index> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  p.out.assign(rank, 1);
  p.stride_a.assign(rank, 0);
  p.stride_b.assign(rank, 0);
  const auto sa = contiguous_strides(a);
  const auto sb = contiguous_strides(b);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t off_a = rank - a.size();
    const std::size_t off_b = rank - b.size();
    const Index da = i >= off_a ? a[i - off_a] : 1;
    const Index db = i >= off_b ? b[i - off_b] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[i] = std::max(da, db);
    if (i >= off_a && da != 1) p.stride_a[i] = sa[i - off_a];
    if (i >= off_b && db != 1) p.stride_b[i] = sb[i - off_b];
  }
  return p;
}

template <class F>
void for_each_pair(const Broadcast& p, F&& f) {
  const Index n = shape_numel(p.out);
  if (p.same) {
    for (Index i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = p.out.size();
  const Index last = p.out[rank - 1];
  const Index la = p.stride_a[rank - 1];
  const Index lb = p.stride_b[rank - 1];
  std::vector<Index> counter(rank, 0);
  Index oa = 0, ob = 0, i = 0;
  while (i < n) {
    for (Index j = 0; j < last; ++j) f(i++, oa + j * la, ob + j * lb);
    // advance the counter over the leading axes
    for (std::size_t d = rank - 1; d-- > 0;) {
      ++counter[d];
      oa += p.stride_a[d];
      ob += p.stride_b[d];
      if (counter[d] < p.out[d]) break;
      oa -= p.stride_a[d] * p.out[d];
      ob -= p.stride_b[d] * p.out[d];
      counter[d] = 0;
    }
  }
}

// dfa/dfb receive (a, b, y) and return the local partial derivative.
template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DA dfa, DB dfb) {
  const Broadcast p = plan_broadcast(a.shape(), b.shape(), name);
  const auto& ad = a.impl()->data;
  const auto& bd = b.impl()->data;
  std::vector<Real> out(static_cast<std::size_t>(shape_numel(p.out)));
  for_each_pair(p, [&](Index i, Index ia, Index ib) { out[i] = f(ad[ia], bd[ib]); });
  Tensor y = make_output(p.out, std::move(out), name);
  if (tracking(a) || tracking(b)) {
    auto ai = a.impl();
    auto bi = b.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [p, ai, bi, yi, dfa, dfb] {
      const auto& g = yi->grad;
      const auto& yd = yi->data;
      const auto& av = ai->data;
      const auto& bv = bi->data;
      if (ai->requires_grad) {
        auto& ga = ai->grad_buffer();
        for_each_pair(p, [&](Index i, Index ia, Index ib) { ga[ia] += g[i] * dfa(av[ia], bv[ib], yd[i]); });
      }
      if (bi->requires_grad) {
        auto& gb = bi->grad_buffer();
        for_each_pair(p, [&](Index i, Index ia, Index ib) { gb[ib] += g[i] * dfb(av[ia], bv[ib], yd[i]); });
      }
    });
  }
  return y;
}

// df receives (x, y).
template <class F, class D>
Tensor unary_op(const Tensor& x, const char* name, F f, D df) {
  const auto& xd = x.impl()->data;
  std::vector<Real> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  Tensor y = make_output(x.shape(), std::move(out), name);
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, df] {
      auto& gx = xi->grad_buffer();
      const auto& g = yi->grad;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * df(xi->data[i], yi->data[i]);
    });
  }
  return y;
}

constexpr Real kInvSqrt2 = Real(0.70710678118654752440);
constexpr Real kInvSqrt2Pi = Real(0.39894228040143267794);

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](Real x, Real y) { return x + y; }, [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](Real x, Real y) { return x - y; }, [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](Real x, Real y) { return x * y; }, [](Real, Real y, Real) { return y; },
      [](Real x, Real, Real) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](Real x, Real y) { return x / y; }, [](Real, Real y, Real) { return Real(1) / y; },
      [](Real, Real y, Real r) { return -r / y; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "minimum", [](Real x, Real y) { return x <= y ? x : y; },
      [](Real x, Real y, Real) { return x <= y ? Real(1) : Real(0); },
      [](Real x, Real y, Real) { return x <= y ? Real(0) : Real(1); });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "maximum", [](Real x, Real y) { return x >= y ? x : y; },
      [](Real x, Real y, Real) { return x >= y ? Real(1) : Real(0); },
      [](Real x, Real y, Real) { return x >= y ? Real(0) : Real(1); });
}

Tensor add_scalar(const Tensor& x, Real s) {
  return unary_op(
      x, "add_scalar", [s](Real v) { return v + s; }, [](Real, Real) { return Real(1); });
}

Tensor mul_scalar(const Tensor& x, Real s) {
  return unary_op(
      x, "mul_scalar", [s](Real v) { return v * s; }, [s](Real, Real) { return s; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, "exp", [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, "log", [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      x, "sqrt", [](Real v) { return std::sqrt(v); }, [](Real, Real y) { return Real(0.5) / y; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, "abs", [](Real v) { return std::abs(v); },
      [](Real v, Real) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, "square", [](Real v) { return v * v; }, [](Real v, Real) { return 2 * v; });
}

Tensor pow(const Tensor& x, Real e) {
  return unary_op(
      x, "pow", [e](Real v) { return std::pow(v, e); },
      [e](Real v, Real) { return v == 0 && e < 1 ? Real(0) : e * std::pow(v, e - 1); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](Real v) {
        if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (1 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](Real v) { return std::tanh(v); }, [](Real, Real y) { return 1 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](Real v) { return v > 0 ? v : Real(0); }, [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

namespace {
Real softplus_value(Real v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }
Real sigmoid_value(Real v) {
  if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
  const Real e = std::exp(v);
  return e / (Real(1) + e);
}
}  // namespace

Tensor softplus(const Tensor& x) {
  return unary_op(x, "softplus", softplus_value, [](Real v, Real) { return sigmoid_value(v); });
}

Tensor silu(const Tensor& x) {
  return unary_op(
      x, "silu", [](Real v) { return v * sigmoid_value(v); },
      [](Real v, Real) {
        const Real s = sigmoid_value(v);
        return s * (1 + v * (1 - s));
      });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      x, "gelu", [](Real v) { return Real(0.5) * v * (1 + std::erf(v * kInvSqrt2)); },
      [](Real v, Real) {
        const Real cdf = Real(0.5) * (1 + std::erf(v * kInvSqrt2));
        const Real pdf = kInvSqrt2Pi * std::exp(Real(-0.5) * v * v);
        return cdf + v * pdf;
      });
}

Tensor clamp(const Tensor& x, Real lo, Real hi) {
  return unary_op(
      x, "clamp", [lo, hi](Real v) { return std::clamp(v, lo, hi); },
      [lo, hi](Real v, Real) { return (v >= lo && v <= hi) ? Real(1) : Real(0); });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw DimensionError("bce_with_logits: " + shape_str(logits.shape()) + " vs " + shape_str(targets.shape()));
  }
  const auto& xd = logits.impl()->data;
  const auto& td = targets.impl()->data;
  std::vector<Real> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = softplus_value(xd[i]) - td[i] * xd[i];
  Tensor y = make_output(logits.shape(), std::move(out), "bce_with_logits");
  if (tracking(logits)) {
    auto xi = logits.impl();
    auto ti = targets.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, ti, yi] {
      auto& gx = xi->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yi->grad[i] * (sigmoid_value(xi->data[i]) - ti->data[i]);
    });
  }
  return y;
}

}  // namespace mdnx
