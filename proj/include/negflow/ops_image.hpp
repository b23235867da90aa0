#ifndef NEGFLOW_OPS_IMAGE_HPP
#define NEGFLOW_OPS_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "negflow/ops.hpp"

namespace negflow {
namespace ops {

namespace detail {

struct ConvDims {
  int n, ci, h, w, co, kh, kw, stride, pad, ho, wo;
};

inline ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad) {
  if (xs.size() != 4 || ws.size() != 4) throw ConfigError("conv2d: x must be (N,C,H,W), w (Co,Ci,kh,kw)");
  ConvDims d{};
  d.n = xs[0];
  d.ci = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.co = ws[0];
  d.kh = ws[2];
  d.kw = ws[3];
  d.stride = stride;
  d.pad = pad;
  if (ws[1] != d.ci)
    throw ConfigError(format_msg("conv2d: input channels ", d.ci, " vs weight ", ws[1]));
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.ho <= 0 || d.wo <= 0) throw ConfigError("conv2d: non-positive output size");
  return d;
}

// Gathers conv patches of one sample into (ci*kh*kw, ho*wo), zero padded.
inline void im2col(const double* x, const ConvDims& d, std::vector<double>& cols) {
  const std::int64_t hw = static_cast<std::int64_t>(d.ho) * d.wo;
  cols.assign(static_cast<std::size_t>(d.ci) * d.kh * d.kw * hw, 0.0);
  for (int c = 0; c < d.ci; ++c)
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        double* row = cols.data() + ((static_cast<std::int64_t>(c) * d.kh + ki) * d.kw + kj) * hw;
        for (int oi = 0; oi < d.ho; ++oi) {
          const int ii = oi * d.stride + ki - d.pad;
          if (ii < 0 || ii >= d.h) continue;
          for (int oj = 0; oj < d.wo; ++oj) {
            const int jj = oj * d.stride + kj - d.pad;
            if (jj < 0 || jj >= d.w) continue;
            row[static_cast<std::int64_t>(oi) * d.wo + oj] =
                x[(static_cast<std::int64_t>(c) * d.h + ii) * d.w + jj];
          }
        }
      }
}

// Scatters (ci*kh*kw, ho*wo) patch gradients back onto one sample.
inline void col2im(const double* cols, const ConvDims& d, double* gx) {
  const std::int64_t hw = static_cast<std::int64_t>(d.ho) * d.wo;
  for (int c = 0; c < d.ci; ++c)
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        const double* row = cols + ((static_cast<std::int64_t>(c) * d.kh + ki) * d.kw + kj) * hw;
        for (int oi = 0; oi < d.ho; ++oi) {
          const int ii = oi * d.stride + ki - d.pad;
          if (ii < 0 || ii >= d.h) continue;
          for (int oj = 0; oj < d.wo; ++oj) {
            const int jj = oj * d.stride + kj - d.pad;
            if (jj < 0 || jj >= d.w) continue;
            gx[(static_cast<std::int64_t>(c) * d.h + ii) * d.w + jj] +=
                row[static_cast<std::int64_t>(oi) * d.wo + oj];
          }
        }
      }
}

}  // namespace detail

/// 2-D convolution, NCHW layout, zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1,
                     int pad = 0) {
  const auto d = detail::conv_dims(x.shape(), w.shape(), stride, pad);
  if (b.numel() != d.co) throw ConfigError("conv2d: bias length mismatch");
  const std::int64_t hw = static_cast<std::int64_t>(d.ho) * d.wo;
  const std::int64_t ckk = static_cast<std::int64_t>(d.ci) * d.kh * d.kw;
  std::vector<double> out(static_cast<std::size_t>(d.n) * d.co * hw);
  std::vector<double> cols;
  MapCM wm(w.values().data(), d.co, ckk);
  const auto& bv = b.values();
  for (int i = 0; i < d.n; ++i) {
    detail::im2col(x.values().data() + static_cast<std::int64_t>(i) * d.ci * d.h * d.w, d, cols);
    MapCM cm(cols.data(), ckk, hw);
    MapM om(out.data() + static_cast<std::int64_t>(i) * d.co * hw, d.co, hw);
    om.noalias() = wm * cm;
    for (int c = 0; c < d.co; ++c) om.row(c).array() += bv[static_cast<std::size_t>(c)];
  }
  return Tensor::make_op(Shape{d.n, d.co, d.ho, d.wo}, std::move(out), {x, w, b},
                         [d, hw, ckk](TensorNode& nd) {
                           auto& px = *nd.parents[0];
                           auto& pw = *nd.parents[1];
                           auto& pb = *nd.parents[2];
                           if (px.requires_grad) px.ensure_grad();
                           if (pw.requires_grad) pw.ensure_grad();
                           if (pb.requires_grad) pb.ensure_grad();
                           std::vector<double> cols;
                           std::vector<double> gcols(static_cast<std::size_t>(ckk) * hw);
                           MapCM wm(pw.value.data(), d.co, ckk);
                           for (int i = 0; i < d.n; ++i) {
                             MapCM g(nd.grad.data() + static_cast<std::int64_t>(i) * d.co * hw, d.co, hw);
                             if (pw.requires_grad) {
                               detail::im2col(px.value.data() + static_cast<std::int64_t>(i) * d.ci * d.h * d.w, d, cols);
                               MapCM cm(cols.data(), ckk, hw);
                               MapM gw(pw.grad.data(), d.co, ckk);
                               gw.noalias() += g * cm.transpose();
                             }
                             if (pb.requires_grad)
                               for (int c = 0; c < d.co; ++c) pb.grad[static_cast<std::size_t>(c)] += g.row(c).sum();
                             if (px.requires_grad) {
                               MapM gc(gcols.data(), ckk, hw);
                               gc.noalias() = wm.transpose() * g;
                               detail::col2im(gcols.data(), d,
                                              px.grad.data() + static_cast<std::int64_t>(i) * d.ci * d.h * d.w);
                             }
                           }
                         });
}

/// Nearest-neighbour 2x upsampling.
inline Tensor upsample_nearest2(const Tensor& x) {
  if (x.shape().size() != 4) throw ConfigError("upsample_nearest2: expected (N,C,H,W)");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<double> out(static_cast<std::size_t>(n) * c * 4 * h * w);
  const auto& xv = x.values();
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(n) * c; ++p) {
    const double* in = xv.data() + p * h * w;
    double* o = out.data() + p * 4 * h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double v = in[static_cast<std::int64_t>(i) * w + j];
        const std::int64_t b = (static_cast<std::int64_t>(2 * i) * 2 * w) + 2 * j;
        o[b] = o[b + 1] = o[b + 2 * w] = o[b + 2 * w + 1] = v;
      }
  }
  return Tensor::make_op(Shape{n, c, 2 * h, 2 * w}, std::move(out), {x}, [n, c, h, w](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (std::int64_t q = 0; q < static_cast<std::int64_t>(n) * c; ++q) {
      double* gp = p.grad.data() + q * h * w;
      const double* g = nd.grad.data() + q * 4 * h * w;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const std::int64_t b = (static_cast<std::int64_t>(2 * i) * 2 * w) + 2 * j;
          gp[static_cast<std::int64_t>(i) * w + j] += g[b] + g[b + 1] + g[b + 2 * w] + g[b + 2 * w + 1];
        }
    }
  });
}

namespace detail {
// Space-to-depth index map: out[(q*C+c), i, j] = in[c, 2i+qi, 2j+qj], q = qi*2+qj.
inline std::vector<std::int64_t> squeeze_index(int c, int h, int w) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(c) * h * w);
  const int ho = h / 2, wo = w / 2;
  for (int q = 0; q < 4; ++q) {
    const int qi = q / 2, qj = q % 2;
    for (int cc = 0; cc < c; ++cc)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          const std::int64_t dst = ((static_cast<std::int64_t>(q) * c + cc) * ho + i) * wo + j;
          const std::int64_t src = (static_cast<std::int64_t>(cc) * h + (2 * i + qi)) * w + (2 * j + qj);
          idx[static_cast<std::size_t>(dst)] = src;
        }
  }
  return idx;
}
}  // namespace detail

/// Space-to-depth: (N,C,H,W) -> (N,4C,H/2,W/2). H and W must be even.
inline Tensor squeeze2(const Tensor& x) {
  if (x.shape().size() != 4) throw ConfigError("squeeze2: expected (N,C,H,W)");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ConfigError(format_msg("squeeze2: odd spatial dims ", h, "x", w));
  const auto idx = detail::squeeze_index(c, h, w);
  const std::int64_t plane = static_cast<std::int64_t>(c) * h * w;
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < plane; ++j) out[static_cast<std::size_t>(i * plane + j)] = xv[i * plane + idx[static_cast<std::size_t>(j)]];
  return Tensor::make_op(Shape{n, 4 * c, h / 2, w / 2}, std::move(out), {x},
                         [idx, plane, n](TensorNode& nd) {
                           auto& p = *nd.parents[0];
                           p.ensure_grad();
                           for (int i = 0; i < n; ++i)
                             for (std::int64_t j = 0; j < plane; ++j)
                               p.grad[static_cast<std::size_t>(i * plane + idx[static_cast<std::size_t>(j)])] +=
                                   nd.grad[static_cast<std::size_t>(i * plane + j)];
                         });
}

/// Depth-to-space inverse of squeeze2: (N,4C,H,W) -> (N,C,2H,2W).
inline Tensor unsqueeze2(const Tensor& x) {
  if (x.shape().size() != 4) throw ConfigError("unsqueeze2: expected (N,C,H,W)");
  const int n = x.dim(0), c4 = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c4 % 4) throw ConfigError("unsqueeze2: channels not divisible by 4");
  const int c = c4 / 4;
  const auto idx = detail::squeeze_index(c, 2 * h, 2 * w);
  const std::int64_t plane = static_cast<std::int64_t>(c4) * h * w;
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  for (int i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < plane; ++j) out[static_cast<std::size_t>(i * plane + idx[static_cast<std::size_t>(j)])] = xv[i * plane + j];
  return Tensor::make_op(Shape{n, c, 2 * h, 2 * w}, std::move(out), {x},
                         [idx, plane, n](TensorNode& nd) {
                           auto& p = *nd.parents[0];
                           p.ensure_grad();
                           for (int i = 0; i < n; ++i)
                             for (std::int64_t j = 0; j < plane; ++j)
                               p.grad[static_cast<std::size_t>(i * plane + j)] +=
                                   nd.grad[static_cast<std::size_t>(i * plane + idx[static_cast<std::size_t>(j)])];
                         });
}

/// Rectangle [top, top+h) x [left, left+w) of a (C,H,W) image.
inline Tensor crop2d(const Tensor& x, int top, int left, int h, int w) {
  if (x.shape().size() != 3) throw ConfigError("crop2d: expected (C,H,W)");
  const int c = x.dim(0), ih = x.dim(1), iw = x.dim(2);
  if (top < 0 || left < 0 || top + h > ih || left + w > iw)
    throw ConfigError(format_msg("crop2d: rect ", top, ",", left, " ", h, "x", w,
                                 " outside image ", ih, "x", iw));
  std::vector<double> out(static_cast<std::size_t>(c) * h * w);
  const auto& xv = x.values();
  for (int cc = 0; cc < c; ++cc)
    for (int i = 0; i < h; ++i)
      std::copy_n(xv.data() + (static_cast<std::int64_t>(cc) * ih + top + i) * iw + left, w,
                  out.data() + (static_cast<std::int64_t>(cc) * h + i) * w);
  return Tensor::make_op(Shape{c, h, w}, std::move(out), {x},
                         [c, ih, iw, top, left, h, w](TensorNode& nd) {
                           auto& p = *nd.parents[0];
                           p.ensure_grad();
                           for (int cc = 0; cc < c; ++cc)
                             for (int i = 0; i < h; ++i)
                               for (int j = 0; j < w; ++j)
                                 p.grad[static_cast<std::size_t>((static_cast<std::int64_t>(cc) * ih + top + i) * iw + left + j)] +=
                                     nd.grad[static_cast<std::size_t>((static_cast<std::int64_t>(cc) * h + i) * w + j)];
                         });
}

/// Writes `patch` over `base` at (top,left). Gradients split: base receives
/// them outside the rectangle, patch inside.
inline Tensor paste2d(const Tensor& base, const Tensor& patch, int top, int left) {
  if (base.shape().size() != 3 || patch.shape().size() != 3)
    throw ConfigError("paste2d: expected (C,H,W) inputs");
  const int c = base.dim(0), ih = base.dim(1), iw = base.dim(2);
  const int h = patch.dim(1), w = patch.dim(2);
  if (patch.dim(0) != c) throw ConfigError("paste2d: channel mismatch");
  if (top < 0 || left < 0 || top + h > ih || left + w > iw)
    throw ConfigError("paste2d: patch exceeds image bounds");
  std::vector<double> out(base.values());
  const auto& pv = patch.values();
  for (int cc = 0; cc < c; ++cc)
    for (int i = 0; i < h; ++i)
      std::copy_n(pv.data() + (static_cast<std::int64_t>(cc) * h + i) * w, w,
                  out.data() + (static_cast<std::int64_t>(cc) * ih + top + i) * iw + left);
  return Tensor::make_op(base.shape(), std::move(out), {base, patch},
                         [c, ih, iw, top, left, h, w](TensorNode& nd) {
                           auto& pb = *nd.parents[0];
                           auto& pp = *nd.parents[1];
                           if (pb.requires_grad) {
                             pb.ensure_grad();
                             for (int cc = 0; cc < c; ++cc)
                               for (int i = 0; i < ih; ++i)
                                 for (int j = 0; j < iw; ++j) {
                                   const bool inside = i >= top && i < top + h && j >= left && j < left + w;
                                   if (!inside)
                                     pb.grad[static_cast<std::size_t>((static_cast<std::int64_t>(cc) * ih + i) * iw + j)] +=
                                         nd.grad[static_cast<std::size_t>((static_cast<std::int64_t>(cc) * ih + i) * iw + j)];
                                 }
                           }
                           if (pp.requires_grad) {
                             pp.ensure_grad();
                             for (int cc = 0; cc < c; ++cc)
                               for (int i = 0; i < h; ++i)
                                 for (int j = 0; j < w; ++j)
                                   pp.grad[static_cast<std::size_t>((static_cast<std::int64_t>(cc) * h + i) * w + j)] +=
                                       nd.grad[static_cast<std::size_t>((static_cast<std::int64_t>(cc) * ih + top + i) * iw + left + j)];
                           }
                         });
}

/// Batch-norm forward over (N,H,W) per channel using batch statistics.
/// Reports the batch mean/var so the caller can maintain running stats.
inline Tensor batchnorm2d_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                double eps, std::vector<double>* batch_mean = nullptr,
                                std::vector<double>* batch_var = nullptr) {
  const auto ncs = detail::as_ncs(x.shape());
  const std::int64_t cnt = ncs.n * ncs.s;
  std::vector<double> mean(static_cast<std::size_t>(ncs.c), 0.0), var(static_cast<std::size_t>(ncs.c), 0.0);
  const auto& xv = x.values();
  for (std::int64_t i = 0; i < ncs.n; ++i)
    for (std::int64_t c = 0; c < ncs.c; ++c) {
      const double* p = xv.data() + (i * ncs.c + c) * ncs.s;
      for (std::int64_t j = 0; j < ncs.s; ++j) mean[static_cast<std::size_t>(c)] += p[j];
    }
  for (double& m : mean) m /= static_cast<double>(cnt);
  for (std::int64_t i = 0; i < ncs.n; ++i)
    for (std::int64_t c = 0; c < ncs.c; ++c) {
      const double* p = xv.data() + (i * ncs.c + c) * ncs.s;
      const double m = mean[static_cast<std::size_t>(c)];
      for (std::int64_t j = 0; j < ncs.s; ++j) var[static_cast<std::size_t>(c)] += (p[j] - m) * (p[j] - m);
    }
  for (double& v : var) v /= static_cast<double>(cnt);
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;

  std::vector<double> out(xv.size());
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::int64_t i = 0; i < ncs.n; ++i)
    for (std::int64_t c = 0; c < ncs.c; ++c) {
      const double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
      const double m = mean[static_cast<std::size_t>(c)];
      const double g = gv[static_cast<std::size_t>(c)], b = bv[static_cast<std::size_t>(c)];
      const double* p = xv.data() + (i * ncs.c + c) * ncs.s;
      double* o = out.data() + (i * ncs.c + c) * ncs.s;
      for (std::int64_t j = 0; j < ncs.s; ++j) o[j] = g * (p[j] - m) * inv + b;
    }
  return Tensor::make_op(x.shape(), std::move(out), {x, gamma, beta},
                         [ncs, mean, var, eps, cnt](TensorNode& nd) {
                           auto& px = *nd.parents[0];
                           auto& pg = *nd.parents[1];
                           auto& pb = *nd.parents[2];
                           if (px.requires_grad) px.ensure_grad();
                           if (pg.requires_grad) pg.ensure_grad();
                           if (pb.requires_grad) pb.ensure_grad();
                           for (std::int64_t c = 0; c < ncs.c; ++c) {
                             const double inv = 1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
                             const double m = mean[static_cast<std::size_t>(c)];
                             const double g = pg.value[static_cast<std::size_t>(c)];
                             // Channel sums of dy and dy*xhat.
                             double sum_dy = 0.0, sum_dyx = 0.0;
                             for (std::int64_t i = 0; i < ncs.n; ++i) {
                               const std::int64_t base = (i * ncs.c + c) * ncs.s;
                               for (std::int64_t j = 0; j < ncs.s; ++j) {
                                 const double dy = nd.grad[static_cast<std::size_t>(base + j)];
                                 const double xh = (px.value[static_cast<std::size_t>(base + j)] - m) * inv;
                                 sum_dy += dy;
                                 sum_dyx += dy * xh;
                               }
                             }
                             if (pg.requires_grad) pg.grad[static_cast<std::size_t>(c)] += sum_dyx;
                             if (pb.requires_grad) pb.grad[static_cast<std::size_t>(c)] += sum_dy;
                             if (px.requires_grad) {
                               const double k = g * inv / static_cast<double>(cnt);
                               for (std::int64_t i = 0; i < ncs.n; ++i) {
                                 const std::int64_t base = (i * ncs.c + c) * ncs.s;
                                 for (std::int64_t j = 0; j < ncs.s; ++j) {
                                   const double dy = nd.grad[static_cast<std::size_t>(base + j)];
                                   const double xh = (px.value[static_cast<std::size_t>(base + j)] - m) * inv;
                                   px.grad[static_cast<std::size_t>(base + j)] +=
                                       k * (static_cast<double>(cnt) * dy - sum_dy - xh * sum_dyx);
                                 }
                               }
                             }
                           }
                         });
}

}  // namespace ops
}  // namespace negflow

#endif  // NEGFLOW_OPS_IMAGE_HPP
