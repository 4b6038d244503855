#include <Eigen/Core>

#include "mdnx/core/ops.hpp"
#include "op_util.hpp"

namespace mdnx {

using detail::make_output;
using detail::record;
using detail::tracking;

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat cmap(const std::vector<Real>& v, Index offset, Index rows, Index cols) {
  return ConstMapMat(v.data() + offset, rows, cols);
}
MapMat mmap(std::vector<Real>& v, Index offset, Index rows, Index cols) { return MapMat(v.data() + offset, rows, cols); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(0)) {
    throw DimensionError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Index m = a.size(0), k = a.size(1), n = b.size(1);
  std::vector<Real> out(static_cast<std::size_t>(m * n));
  mmap(out, 0, m, n).noalias() = cmap(a.impl()->data, 0, m, k) * cmap(b.impl()->data, 0, k, n);
  Tensor y = make_output({m, n}, std::move(out), "matmul");
  if (tracking(a) || tracking(b)) {
    auto ai = a.impl();
    auto bi = b.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [ai, bi, yi, m, k, n] {
      const auto g = cmap(yi->grad, 0, m, n);
      if (ai->requires_grad) mmap(ai->grad_buffer(), 0, m, k).noalias() += g * cmap(bi->data, 0, k, n).transpose();
      if (bi->requires_grad) mmap(bi->grad_buffer(), 0, k, n).noalias() += cmap(ai->data, 0, m, k).transpose() * g;
    });
  }
  return y;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.dim() != 3 || b.dim() != 3 || a.size(0) != b.size(0) || a.size(2) != b.size(1)) {
    throw DimensionError("bmm: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Index bs = a.size(0), m = a.size(1), k = a.size(2), n = b.size(2);
  std::vector<Real> out(static_cast<std::size_t>(bs * m * n));
  for (Index i = 0; i < bs; ++i) {
    mmap(out, i * m * n, m, n).noalias() = cmap(a.impl()->data, i * m * k, m, k) * cmap(b.impl()->data, i * k * n, k, n);
  }
  Tensor y = make_output({bs, m, n}, std::move(out), "bmm");
  if (tracking(a) || tracking(b)) {
    auto ai = a.impl();
    auto bi = b.impl();
    TensorImpl* yi = y.impl().get();
    record(y, [ai, bi, yi, bs, m, k, n] {
      for (Index i = 0; i < bs; ++i) {
        const auto g = cmap(yi->grad, i * m * n, m, n);
        if (ai->requires_grad)
          mmap(ai->grad_buffer(), i * m * k, m, k).noalias() += g * cmap(bi->data, i * k * n, k, n).transpose();
        if (bi->requires_grad)
          mmap(bi->grad_buffer(), i * k * n, k, n).noalias() += cmap(ai->data, i * m * k, m, k).transpose() * g;
      }
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (w.dim() != 2 || x.size(-1) != w.size(1)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  const Index in = w.size(1), out_f = w.size(0);
  if (bias.defined() && (bias.dim() != 1 || bias.size(0) != out_f)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " vs weight " + shape_str(w.shape()));
  }
  const Index rows = x.numel() / in;
  std::vector<Real> out(static_cast<std::size_t>(rows * out_f));
  auto ym = mmap(out, 0, rows, out_f);
  ym.noalias() = cmap(x.impl()->data, 0, rows, in) * cmap(w.impl()->data, 0, out_f, in).transpose();
  if (bias.defined()) ym.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(bias.impl()->data.data(), out_f);
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  Tensor y = make_output(std::move(out_shape), std::move(out), "linear");
  if (detail::any_tracking(x, w, bias)) {
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    TensorImpl* yi = y.impl().get();
    record(y, [xi, wi, bi, yi, rows, in, out_f] {
      const auto g = cmap(yi->grad, 0, rows, out_f);
      if (xi->requires_grad) mmap(xi->grad_buffer(), 0, rows, in).noalias() += g * cmap(wi->data, 0, out_f, in);
      if (wi->requires_grad) mmap(wi->grad_buffer(), 0, out_f, in).noalias() += g.transpose() * cmap(xi->data, 0, rows, in);
      if (bi && bi->requires_grad) {
        // Plain loops: Eigen's vectorized reductions peel by address, which
        // makes the summation order depend on allocation alignment.
        auto& gb = bi->grad_buffer();
        for (Index r = 0; r < rows; ++r)
          for (Index c = 0; c < out_f; ++c) gb[static_cast<std::size_t>(c)] += g(r, c);
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolution via im2col: per image, out[Cout, H'W'] = W[Cout, Cin*k*k] * col.

Index conv_output_size(Index in, Index kernel, const Conv2dArgs& args) {
  return (in + 2 * args.padding - args.dilation * (kernel - 1) - 1) / args.stride + 1;
}

namespace {

struct ConvGeom {
  Index n, cin, h, w, cout, k, oh, ow;
  Conv2dArgs args;
};

void im2col(const Real* img, const ConvGeom& g, Real* col) {
  const Index hw = g.oh * g.ow;
  for (Index c = 0; c < g.cin; ++c)
    for (Index ky = 0; ky < g.k; ++ky)
      for (Index kx = 0; kx < g.k; ++kx) {
        Real* row = col + ((c * g.k + ky) * g.k + kx) * hw;
        for (Index oy = 0; oy < g.oh; ++oy) {
          const Index iy = oy * g.args.stride - g.args.padding + ky * g.args.dilation;
          for (Index ox = 0; ox < g.ow; ++ox) {
            const Index ix = ox * g.args.stride - g.args.padding + kx * g.args.dilation;
            row[oy * g.ow + ox] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? img[(c * g.h + iy) * g.w + ix] : Real(0);
          }
        }
      }
}

void col2im(const Real* col, const ConvGeom& g, Real* img) {
  const Index hw = g.oh * g.ow;
  for (Index c = 0; c < g.cin; ++c)
    for (Index ky = 0; ky < g.k; ++ky)
      for (Index kx = 0; kx < g.k; ++kx) {
        const Real* row = col + ((c * g.k + ky) * g.k + kx) * hw;
        for (Index oy = 0; oy < g.oh; ++oy) {
          const Index iy = oy * g.args.stride - g.args.padding + ky * g.args.dilation;
          if (iy < 0 || iy >= g.h) continue;
          for (Index ox = 0; ox < g.ow; ++ox) {
            const Index ix = ox * g.args.stride - g.args.padding + kx * g.args.dilation;
            if (ix >= 0 && ix < g.w) img[(c * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
          }
        }
      }
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.args.stride == 1 && g.args.padding == 0; }

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, const Conv2dArgs& args) {
  if (x.dim() != 4 || w.dim() != 4 || w.size(1) != x.size(1) || w.size(2) != w.size(3)) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  if (args.stride < 1 || args.dilation < 1 || args.padding < 0) {
    throw DimensionError("conv2d: stride and dilation must be >= 1 and padding >= 0");
  }
  ConvGeom g{x.size(0), x.size(1), x.size(2), x.size(3), w.size(0), w.size(2), 0, 0, args};
  if (g.k < 1) throw DimensionError("conv2d: kernel size must be >= 1");
  g.oh = conv_output_size(g.h, g.k, args);
  g.ow = conv_output_size(g.w, g.k, args);
  if (g.oh < 1 || g.ow < 1) {
    throw DimensionError("conv2d: non-positive output size for input " + shape_str(x.shape()) + " and kernel " +
                         shape_str(w.shape()));
  }
  if (bias.defined() && (bias.dim() != 1 || bias.size(0) != g.cout)) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()));
  }
  const Index kk = g.cin * g.k * g.k;
  const Index hw = g.oh * g.ow;
  const bool pointwise = is_pointwise(g);
  std::vector<Real> out(static_cast<std::size_t>(g.n * g.cout * hw));
  std::vector<Real> col(pointwise ? 0 : static_cast<std::size_t>(kk * hw));
  const auto wm = cmap(w.impl()->data, 0, g.cout, kk);
  for (Index b = 0; b < g.n; ++b) {
    const Real* img = x.impl()->data.data() + b * g.cin * g.h * g.w;
    auto ym = mmap(out, b * g.cout * hw, g.cout, hw);
    if (pointwise) {
      ym.noalias() = wm * ConstMapMat(img, kk, hw);
    } else {
      im2col(img, g, col.data());
      ym.noalias() = wm * ConstMapMat(col.data(), kk, hw);
    }
    if (bias.defined()) ym.colwise() += Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>(bias.impl()->data.data(), g.cout);
  }
  Tensor y = make_output({g.n, g.cout, g.oh, g.ow}, std::move(out), "conv2d");
  if (detail::any_tracking(x, w, bias)) {
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    TensorImpl* yi = y.impl().get();
    record(y, [xi, wi, bi, yi, g, kk, hw, pointwise] {
      std::vector<Real> col(static_cast<std::size_t>(kk * hw));
      const auto wm = cmap(wi->data, 0, g.cout, kk);
      for (Index b = 0; b < g.n; ++b) {
        const auto gy = cmap(yi->grad, b * g.cout * hw, g.cout, hw);
        const Real* img = xi->data.data() + b * g.cin * g.h * g.w;
        if (wi->requires_grad) {
          auto gw = mmap(wi->grad_buffer(), 0, g.cout, kk);
          if (pointwise) {
            gw.noalias() += gy * ConstMapMat(img, kk, hw).transpose();
          } else {
            im2col(img, g, col.data());
            gw.noalias() += gy * ConstMapMat(col.data(), kk, hw).transpose();
          }
        }
        if (bi && bi->requires_grad) {
          auto& gb = bi->grad_buffer();
          for (Index c = 0; c < g.cout; ++c) {
            Real acc = 0;
            for (Index p = 0; p < hw; ++p) acc += gy(c, p);
            gb[static_cast<std::size_t>(c)] += acc;
          }
        }
        if (xi->requires_grad) {
          Real* gimg = xi->grad_buffer().data() + b * g.cin * g.h * g.w;
          if (pointwise) {
            MapMat(gimg, kk, hw).noalias() += wm.transpose() * gy;
          } else {
            MapMat(col.data(), kk, hw).noalias() = wm.transpose() * gy;
            col2im(col.data(), g, gimg);
          }
        }
      }
    });
  }
  return y;
}

}  // namespace mdnx
