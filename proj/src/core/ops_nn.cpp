#include <algorithm>
#include <cmath>

#include "mdnx/core/ops.hpp"
#include "op_util.hpp"

namespace mdnx {

using detail::make_output;
using detail::normalize_axis;
using detail::record;
using detail::split_at;
using detail::tracking;

Tensor softmax(const Tensor& x, Index axis) {
  axis = normalize_axis(axis, x.dim());
  const auto s = split_at(x.shape(), axis);
  const auto& xd = x.impl()->data;
  std::vector<Real> out(xd.size());
  for (Index o = 0; o < s.outer; ++o)
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.len * s.inner + i;
      Real mx = xd[base];
      for (Index a = 1; a < s.len; ++a) mx = std::max(mx, xd[base + a * s.inner]);
      Real z = 0;
      for (Index a = 0; a < s.len; ++a) z += out[base + a * s.inner] = std::exp(xd[base + a * s.inner] - mx);
      for (Index a = 0; a < s.len; ++a) out[base + a * s.inner] /= z;
    }
  Tensor y = make_output(x.shape(), std::move(out), "softmax");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, s] {
      auto& gx = xi->grad_buffer();
      const auto& g = yi->grad;
      const auto& yd = yi->data;
      for (Index o = 0; o < s.outer; ++o)
        for (Index i = 0; i < s.inner; ++i) {
          const Index base = o * s.len * s.inner + i;
          Real dot = 0;
          for (Index a = 0; a < s.len; ++a) dot += g[base + a * s.inner] * yd[base + a * s.inner];
          for (Index a = 0; a < s.len; ++a) {
            const Index k = base + a * s.inner;
            gx[k] += yd[k] * (g[k] - dot);
          }
        }
    });
  }
  return y;
}

Tensor log_softmax(const Tensor& x, Index axis) {
  axis = normalize_axis(axis, x.dim());
  const auto s = split_at(x.shape(), axis);
  const auto& xd = x.impl()->data;
  std::vector<Real> out(xd.size());
  for (Index o = 0; o < s.outer; ++o)
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.len * s.inner + i;
      Real mx = xd[base];
      for (Index a = 1; a < s.len; ++a) mx = std::max(mx, xd[base + a * s.inner]);
      Real z = 0;
      for (Index a = 0; a < s.len; ++a) z += std::exp(xd[base + a * s.inner] - mx);
      const Real lse = mx + std::log(z);
      for (Index a = 0; a < s.len; ++a) out[base + a * s.inner] = xd[base + a * s.inner] - lse;
    }
  Tensor y = make_output(x.shape(), std::move(out), "log_softmax");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, s] {
      auto& gx = xi->grad_buffer();
      const auto& g = yi->grad;
      const auto& yd = yi->data;
      for (Index o = 0; o < s.outer; ++o)
        for (Index i = 0; i < s.inner; ++i) {
          const Index base = o * s.len * s.inner + i;
          Real gs = 0;
          for (Index a = 0; a < s.len; ++a) gs += g[base + a * s.inner];
          for (Index a = 0; a < s.len; ++a) {
            const Index k = base + a * s.inner;
            gx[k] += g[k] - std::exp(yd[k]) * gs;
          }
        }
    });
  }
  return y;
}

Tensor l2_normalize(const Tensor& x, Index axis, Real eps) {
  const Tensor norm = sqrt(add_scalar(sum(square(x), axis, true), eps * eps));
  return div(x, norm);
}

Tensor avg_pool2d(const Tensor& x, Index factor) {
  if (x.dim() != 4 || factor < 1 || x.size(2) % factor != 0 || x.size(3) % factor != 0) {
    throw DimensionError("avg_pool2d: " + shape_str(x.shape()) + " not divisible by " + std::to_string(factor));
  }
  const Index nc = x.size(0) * x.size(1), h = x.size(2), w = x.size(3);
  const Index oh = h / factor, ow = w / factor;
  const Real scale = Real(1) / static_cast<Real>(factor * factor);
  const auto& xd = x.impl()->data;
  std::vector<Real> out(static_cast<std::size_t>(nc * oh * ow), Real(0));
  for (Index p = 0; p < nc; ++p)
    for (Index y = 0; y < h; ++y)
      for (Index xx = 0; xx < w; ++xx) out[(p * oh + y / factor) * ow + xx / factor] += xd[(p * h + y) * w + xx] * scale;
  Tensor y = make_output({x.size(0), x.size(1), oh, ow}, std::move(out), "avg_pool2d");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, nc, h, w, oh, ow, factor, scale] {
      auto& g = xi->grad_buffer();
      for (Index p = 0; p < nc; ++p)
        for (Index y = 0; y < h; ++y)
          for (Index xx = 0; xx < w; ++xx) g[(p * h + y) * w + xx] += yi->grad[(p * oh + y / factor) * ow + xx / factor] * scale;
    });
  }
  return y;
}

Tensor upsample_nearest(const Tensor& x, Index factor) {
  if (x.dim() != 4 || factor < 1) throw DimensionError("upsample_nearest: " + shape_str(x.shape()));
  const Index nc = x.size(0) * x.size(1), h = x.size(2), w = x.size(3);
  const Index oh = h * factor, ow = w * factor;
  const auto& xd = x.impl()->data;
  std::vector<Real> out(static_cast<std::size_t>(nc * oh * ow));
  for (Index p = 0; p < nc; ++p)
    for (Index y = 0; y < oh; ++y)
      for (Index xx = 0; xx < ow; ++xx) out[(p * oh + y) * ow + xx] = xd[(p * h + y / factor) * w + xx / factor];
  Tensor y = make_output({x.size(0), x.size(1), oh, ow}, std::move(out), "upsample_nearest");
  if (tracking(x)) {
    auto xi = x.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, yi, nc, h, w, oh, ow, factor] {
      auto& g = xi->grad_buffer();
      for (Index p = 0; p < nc; ++p)
        for (Index y = 0; y < oh; ++y)
          for (Index xx = 0; xx < ow; ++xx) g[(p * h + y / factor) * w + xx / factor] += yi->grad[(p * oh + y) * ow + xx];
    });
  }
  return y;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean, Tensor& running_var,
                  bool training, Real momentum, Real eps) {
  if (x.dim() < 2) throw DimensionError("batch_norm: expected [N, C, ...], got " + shape_str(x.shape()));
  const Index c = x.size(1);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c) {
    throw DimensionError("batch_norm: channel count " + std::to_string(c) + " does not match parameters");
  }
  const Index n = x.size(0);
  const Index inner = x.numel() / (n * c);
  const Index m = n * inner;
  const auto& xd = x.impl()->data;
  std::vector<Real> mu(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
  if (training) {
    auto& rm = running_mean.impl()->data;
    auto& rv = running_var.impl()->data;
    for (Index ch = 0; ch < c; ++ch) {
      Real s = 0;
      for (Index b = 0; b < n; ++b)
        for (Index i = 0; i < inner; ++i) s += xd[(b * c + ch) * inner + i];
      const Real mean_v = s / static_cast<Real>(m);
      Real ss = 0;
      for (Index b = 0; b < n; ++b)
        for (Index i = 0; i < inner; ++i) {
          const Real d = xd[(b * c + ch) * inner + i] - mean_v;
          ss += d * d;
        }
      const Real var = ss / static_cast<Real>(m);
      mu[ch] = mean_v;
      inv_std[ch] = Real(1) / std::sqrt(var + eps);
      const Real unbiased = m > 1 ? ss / static_cast<Real>(m - 1) : var;
      rm[ch] = (1 - momentum) * rm[ch] + momentum * mean_v;
      rv[ch] = (1 - momentum) * rv[ch] + momentum * unbiased;
    }
  } else {
    for (Index ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean[ch];
      inv_std[ch] = Real(1) / std::sqrt(running_var[ch] + eps);
    }
  }
  std::vector<Real> xhat(xd.size()), out(xd.size());
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index i = 0; i < inner; ++i) {
        const Index k = (b * c + ch) * inner + i;
        xhat[k] = (xd[k] - mu[ch]) * inv_std[ch];
        out[k] = gamma[ch] * xhat[k] + beta[ch];
      }
  Tensor y = make_output(x.shape(), std::move(out), "batch_norm");
  if (detail::any_tracking(x, gamma, beta)) {
    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, gi, bi, yi, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c, inner, m, training] {
      const auto& g = yi->grad;
      for (Index ch = 0; ch < c; ++ch) {
        Real sg = 0, sgx = 0;
        for (Index b = 0; b < n; ++b)
          for (Index i = 0; i < inner; ++i) {
            const Index k = (b * c + ch) * inner + i;
            sg += g[k];
            sgx += g[k] * xhat[k];
          }
        if (gi->requires_grad) gi->grad_buffer()[ch] += sgx;
        if (bi->requires_grad) bi->grad_buffer()[ch] += sg;
        if (!xi->requires_grad) continue;
        auto& gx = xi->grad_buffer();
        const Real scale = gi->data[ch] * inv_std[ch];
        const Real inv_m = Real(1) / static_cast<Real>(m);
        for (Index b = 0; b < n; ++b)
          for (Index i = 0; i < inner; ++i) {
            const Index k = (b * c + ch) * inner + i;
            gx[k] += training ? scale * (g[k] - sg * inv_m - xhat[k] * sgx * inv_m) : scale * g[k];
          }
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  const Index d = x.size(-1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: feature size " + std::to_string(d) + " does not match parameters");
  }
  const Index rows = x.numel() / d;
  const auto& xd = x.impl()->data;
  std::vector<Real> xhat(xd.size()), out(xd.size()), inv_std(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    const Real* row = xd.data() + r * d;
    Real s = 0;
    for (Index j = 0; j < d; ++j) s += row[j];
    const Real mean_v = s / static_cast<Real>(d);
    Real ss = 0;
    for (Index j = 0; j < d; ++j) ss += (row[j] - mean_v) * (row[j] - mean_v);
    inv_std[r] = Real(1) / std::sqrt(ss / static_cast<Real>(d) + eps);
    for (Index j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mean_v) * inv_std[r];
      out[r * d + j] = gamma[j] * xhat[r * d + j] + beta[j];
    }
  }
  Tensor y = make_output(x.shape(), std::move(out), "layer_norm");
  if (detail::any_tracking(x, gamma, beta)) {
    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [xi, gi, bi, yi, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
      const auto& g = yi->grad;
      std::vector<Real> gh(static_cast<std::size_t>(d));
      for (Index r = 0; r < rows; ++r) {
        Real mean_gh = 0, mean_ghx = 0;
        for (Index j = 0; j < d; ++j) {
          const Index k = r * d + j;
          if (gi->requires_grad) gi->grad_buffer()[j] += g[k] * xhat[k];
          if (bi->requires_grad) bi->grad_buffer()[j] += g[k];
          gh[j] = g[k] * gi->data[j];
          mean_gh += gh[j];
          mean_ghx += gh[j] * xhat[k];
        }
        if (!xi->requires_grad) continue;
        mean_gh /= static_cast<Real>(d);
        mean_ghx /= static_cast<Real>(d);
        auto& gx = xi->grad_buffer();
        for (Index j = 0; j < d; ++j) {
          const Index k = r * d + j;
          gx[k] += inv_std[r] * (gh[j] - mean_gh - xhat[k] * mean_ghx);
        }
      }
    });
  }
  return y;
}

}  // namespace mdnx
