#ifndef NEGFLOW_OPS_HPP
#define NEGFLOW_OPS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "negflow/tensor.hpp"

namespace negflow {
namespace ops {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

namespace detail {

/// Interprets a tensor as (N, C, S): leading batch, channel axis 1, flattened
/// spatial remainder. Rank-2 tensors are (N, C) with S = 1.
struct Ncs {
  std::int64_t n, c, s;
};

inline Ncs as_ncs(const Shape& sh) {
  if (sh.size() < 2) throw ConfigError(format_msg("expected rank>=2 tensor, got ", shape_str(sh)));
  Ncs r{sh[0], sh[1], 1};
  for (std::size_t i = 2; i < sh.size(); ++i) r.s *= sh[i];
  return r;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a.shape(), b.shape()))
    throw ConfigError(format_msg(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                                 shape_str(b.shape())));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *n.parents[static_cast<std::size_t>(k)];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return Tensor::make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& x : out) x += c;
  return Tensor::make_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

inline Tensor mul_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& x : out) x *= c;
  return Tensor::make_op(a.shape(), std::move(out), {a}, [c](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += c * n.grad[i];
  });
}

inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

/// Elementwise product with a constant array (no gradient into the constant).
inline Tensor mul_const(const Tensor& a, const std::vector<double>& w) {
  if (w.size() != a.values().size())
    throw ConfigError("mul_const: size mismatch");
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= w[i];
  return Tensor::make_op(a.shape(), std::move(out), {a}, [w](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * w[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

inline Tensor exp_t(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = std::exp(x);
  return Tensor::make_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * n.value[i];
  });
}

inline Tensor log_t(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = std::log(x);
  return Tensor::make_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] / p.value[i];
  });
}

inline Tensor tanh_t(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = std::tanh(x);
  return Tensor::make_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      p.grad[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

inline Tensor sigmoid_t(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return Tensor::make_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      p.grad[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

inline Tensor relu_t(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = x > 0 ? x : 0.0;
  return Tensor::make_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (p.value[i] > 0) p.grad[i] += n.grad[i];
  });
}

inline Tensor softplus_t(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  return Tensor::make_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double x = p.value[i];
      const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      p.grad[i] += n.grad[i] * s;
    }
  });
}

/// Clamp to [0,1]; gradient passes only strictly inside the interval.
inline Tensor clamp01(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = std::min(1.0, std::max(0.0, x));
  return Tensor::make_op(a.shape(), std::move(out), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (p.value[i] > 0.0 && p.value[i] < 1.0) p.grad[i] += n.grad[i];
  });
}

inline Tensor clamp_min(const Tensor& a, double lo) {
  std::vector<double> out(a.values());
  for (double& x : out) x = std::max(x, lo);
  return Tensor::make_op(a.shape(), std::move(out), {a}, [lo](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (p.value[i] > lo) p.grad[i] += n.grad[i];
  });
}

/// ln(e^x + e^c) for a constant c, numerically stable.
inline Tensor logaddexp_const(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& x : out) x = std::max(x, c) + std::log1p(std::exp(-std::abs(x - c)));
  return Tensor::make_op(a.shape(), std::move(out), {a}, [c](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double d = p.value[i] - c;
      const double s = d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
      p.grad[i] += n.grad[i] * s;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return Tensor::make_op(Shape{}, {s}, {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (double& g : p.grad) g += n.grad[0];
  });
}

inline Tensor mean_all(const Tensor& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

/// (N, ...) -> (N): total over all trailing axes per sample.
inline Tensor sum_per_sample(const Tensor& a) {
  if (a.shape().empty()) throw ConfigError("sum_per_sample: rank-0 input");
  const int n = a.dim(0);
  const std::int64_t stride = a.numel() / n;
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  const auto& av = a.values();
  for (int i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < stride; ++j) out[static_cast<std::size_t>(i)] += av[i * stride + j];
  return Tensor::make_op(Shape{n}, std::move(out), {a}, [n, stride](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < stride; ++j) p.grad[i * stride + j] += nd.grad[static_cast<std::size_t>(i)];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape s) {
  if (shape_numel(s) != a.numel())
    throw ConfigError(format_msg("reshape: ", shape_str(a.shape()), " -> ", shape_str(s)));
  return Tensor::make_op(std::move(s), a.values(), {a}, [](TensorNode& n) {
    auto& p = *n.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

/// Stacks same-shape tensors along a new leading axis.
inline Tensor stack0(const std::vector<Tensor>& items) {
  if (items.empty()) throw ConfigError("stack0: empty list");
  const Shape& s0 = items[0].shape();
  Shape out_shape;
  out_shape.push_back(static_cast<int>(items.size()));
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  const std::int64_t stride = items[0].numel();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(stride * static_cast<std::int64_t>(items.size())));
  for (const Tensor& t : items) {
    if (!same_shape(t.shape(), s0)) throw ConfigError("stack0: mixed shapes");
    out.insert(out.end(), t.values().begin(), t.values().end());
  }
  return Tensor::make_op(std::move(out_shape), std::move(out), items, [stride](TensorNode& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      auto& p = *n.parents[k];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      const double* g = n.grad.data() + static_cast<std::int64_t>(k) * stride;
      for (std::int64_t i = 0; i < stride; ++i) p.grad[static_cast<std::size_t>(i)] += g[i];
    }
  });
}

/// Concatenates along the channel axis (axis 1).
inline Tensor concat_c(const Tensor& a, const Tensor& b) {
  const auto na = detail::as_ncs(a.shape());
  const auto nb = detail::as_ncs(b.shape());
  if (na.n != nb.n || na.s != nb.s || a.shape().size() != b.shape().size())
    throw ConfigError("concat_c: incompatible shapes");
  Shape out_shape = a.shape();
  out_shape[1] += b.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(shape_numel(out_shape)));
  const auto& av = a.values();
  const auto& bv = b.values();
  const std::int64_t ca = na.c, cb = nb.c, s = na.s;
  for (std::int64_t i = 0; i < na.n; ++i) {
    std::copy_n(av.data() + i * ca * s, ca * s, out.data() + i * (ca + cb) * s);
    std::copy_n(bv.data() + i * cb * s, cb * s, out.data() + i * (ca + cb) * s + ca * s);
  }
  return Tensor::make_op(std::move(out_shape), std::move(out), {a, b},
                         [ca, cb, s, n = na.n](TensorNode& nd) {
                           auto& pa = *nd.parents[0];
                           auto& pb = *nd.parents[1];
                           for (std::int64_t i = 0; i < n; ++i) {
                             const double* g = nd.grad.data() + i * (ca + cb) * s;
                             if (pa.requires_grad) {
                               pa.ensure_grad();
                               for (std::int64_t j = 0; j < ca * s; ++j)
                                 pa.grad[static_cast<std::size_t>(i * ca * s + j)] += g[j];
                             }
                             if (pb.requires_grad) {
                               pb.ensure_grad();
                               for (std::int64_t j = 0; j < cb * s; ++j)
                                 pb.grad[static_cast<std::size_t>(i * cb * s + j)] += g[ca * s + j];
                             }
                           }
                         });
}

/// Channels [c0, c1) of a (N,C,...) tensor.
inline Tensor slice_c(const Tensor& a, int c0, int c1) {
  const auto ncs = detail::as_ncs(a.shape());
  if (c0 < 0 || c1 > ncs.c || c0 >= c1) throw ConfigError("slice_c: bad channel range");
  Shape out_shape = a.shape();
  out_shape[1] = c1 - c0;
  const std::int64_t cs = c1 - c0, c = ncs.c, s = ncs.s;
  std::vector<double> out(static_cast<std::size_t>(ncs.n * cs * s));
  const auto& av = a.values();
  for (std::int64_t i = 0; i < ncs.n; ++i)
    std::copy_n(av.data() + (i * c + c0) * s, cs * s, out.data() + i * cs * s);
  return Tensor::make_op(std::move(out_shape), std::move(out), {a},
                         [c0, cs, c, s, n = ncs.n](TensorNode& nd) {
                           auto& p = *nd.parents[0];
                           p.ensure_grad();
                           for (std::int64_t i = 0; i < n; ++i)
                             for (std::int64_t j = 0; j < cs * s; ++j)
                               p.grad[static_cast<std::size_t>((i * c + c0) * s + j)] +=
                                   nd.grad[static_cast<std::size_t>(i * cs * s + j)];
                         });
}

// ---------------------------------------------------------------------------
// Channel reductions / broadcasts (axis 1)
// ---------------------------------------------------------------------------

/// log(sum_c exp(x)) over the channel axis; output keeps a singleton channel.
inline Tensor logsumexp_c(const Tensor& a) {
  const auto ncs = detail::as_ncs(a.shape());
  Shape out_shape = a.shape();
  out_shape[1] = 1;
  std::vector<double> out(static_cast<std::size_t>(ncs.n * ncs.s));
  const auto& av = a.values();
  for (std::int64_t i = 0; i < ncs.n; ++i)
    for (std::int64_t j = 0; j < ncs.s; ++j) {
      double m = -HUGE_VAL;
      for (std::int64_t k = 0; k < ncs.c; ++k) m = std::max(m, av[(i * ncs.c + k) * ncs.s + j]);
      double acc = 0.0;
      for (std::int64_t k = 0; k < ncs.c; ++k) acc += std::exp(av[(i * ncs.c + k) * ncs.s + j] - m);
      out[static_cast<std::size_t>(i * ncs.s + j)] = m + std::log(acc);
    }
  return Tensor::make_op(std::move(out_shape), std::move(out), {a}, [ncs](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (std::int64_t i = 0; i < ncs.n; ++i)
      for (std::int64_t j = 0; j < ncs.s; ++j) {
        const double lse = nd.value[static_cast<std::size_t>(i * ncs.s + j)];
        const double g = nd.grad[static_cast<std::size_t>(i * ncs.s + j)];
        for (std::int64_t k = 0; k < ncs.c; ++k) {
          const std::size_t idx = static_cast<std::size_t>((i * ncs.c + k) * ncs.s + j);
          p.grad[idx] += g * std::exp(p.value[idx] - lse);
        }
      }
  });
}

/// Replicates a singleton channel across k channels.
inline Tensor broadcast_c(const Tensor& a, int k) {
  const auto ncs = detail::as_ncs(a.shape());
  if (ncs.c != 1) throw ConfigError("broadcast_c: channel axis must be 1");
  Shape out_shape = a.shape();
  out_shape[1] = k;
  std::vector<double> out(static_cast<std::size_t>(ncs.n * k * ncs.s));
  const auto& av = a.values();
  for (std::int64_t i = 0; i < ncs.n; ++i)
    for (int c = 0; c < k; ++c)
      std::copy_n(av.data() + i * ncs.s, ncs.s, out.data() + (i * k + c) * ncs.s);
  return Tensor::make_op(std::move(out_shape), std::move(out), {a}, [ncs, k](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (std::int64_t i = 0; i < ncs.n; ++i)
      for (int c = 0; c < k; ++c)
        for (std::int64_t j = 0; j < ncs.s; ++j)
          p.grad[static_cast<std::size_t>(i * ncs.s + j)] +=
              nd.grad[static_cast<std::size_t>((i * k + c) * ncs.s + j)];
  });
}

/// Sum over the channel axis, keeping a singleton channel.
inline Tensor sum_c(const Tensor& a) {
  const auto ncs = detail::as_ncs(a.shape());
  Shape out_shape = a.shape();
  out_shape[1] = 1;
  std::vector<double> out(static_cast<std::size_t>(ncs.n * ncs.s), 0.0);
  const auto& av = a.values();
  for (std::int64_t i = 0; i < ncs.n; ++i)
    for (std::int64_t k = 0; k < ncs.c; ++k)
      for (std::int64_t j = 0; j < ncs.s; ++j)
        out[static_cast<std::size_t>(i * ncs.s + j)] += av[(i * ncs.c + k) * ncs.s + j];
  return Tensor::make_op(std::move(out_shape), std::move(out), {a}, [ncs](TensorNode& nd) {
    auto& p = *nd.parents[0];
    p.ensure_grad();
    for (std::int64_t i = 0; i < ncs.n; ++i)
      for (std::int64_t k = 0; k < ncs.c; ++k)
        for (std::int64_t j = 0; j < ncs.s; ++j)
          p.grad[static_cast<std::size_t>((i * ncs.c + k) * ncs.s + j)] +=
              nd.grad[static_cast<std::size_t>(i * ncs.s + j)];
  });
}

/// Per-channel affine y = x * scale[c] + bias[c]; differentiable in all three.
inline Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& bias) {
  const auto ncs = detail::as_ncs(x.shape());
  if (scale.numel() != ncs.c || bias.numel() != ncs.c)
    throw ConfigError("channel_affine: scale/bias length must equal channel count");
  std::vector<double> out(x.values());
  const auto& sv = scale.values();
  const auto& bv = bias.values();
  for (std::int64_t i = 0; i < ncs.n; ++i)
    for (std::int64_t c = 0; c < ncs.c; ++c) {
      const double s = sv[static_cast<std::size_t>(c)], b = bv[static_cast<std::size_t>(c)];
      double* o = out.data() + (i * ncs.c + c) * ncs.s;
      for (std::int64_t j = 0; j < ncs.s; ++j) o[j] = o[j] * s + b;
    }
  return Tensor::make_op(x.shape(), std::move(out), {x, scale, bias}, [ncs](TensorNode& nd) {
    auto& px = *nd.parents[0];
    auto& ps = *nd.parents[1];
    auto& pb = *nd.parents[2];
    if (px.requires_grad) px.ensure_grad();
    if (ps.requires_grad) ps.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (std::int64_t i = 0; i < ncs.n; ++i)
      for (std::int64_t c = 0; c < ncs.c; ++c) {
        const std::int64_t base = (i * ncs.c + c) * ncs.s;
        const double s = ps.value[static_cast<std::size_t>(c)];
        for (std::int64_t j = 0; j < ncs.s; ++j) {
          const double g = nd.grad[static_cast<std::size_t>(base + j)];
          if (px.requires_grad) px.grad[static_cast<std::size_t>(base + j)] += g * s;
          if (ps.requires_grad)
            ps.grad[static_cast<std::size_t>(c)] += g * px.value[static_cast<std::size_t>(base + j)];
          if (pb.requires_grad) pb.grad[static_cast<std::size_t>(c)] += g;
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

/// x (N,I) * W^T (I,O) + b -> (N,O).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2)
    throw ConfigError("linear: x and w must be rank 2");
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  if (w.dim(1) != in || b.numel() != out_dim)
    throw ConfigError(format_msg("linear: shape mismatch x", shape_str(x.shape()), " w",
                                 shape_str(w.shape())));
  std::vector<double> out(static_cast<std::size_t>(n) * out_dim);
  {
    MapCM xm(x.values().data(), n, in);
    MapCM wm(w.values().data(), out_dim, in);
    MapM om(out.data(), n, out_dim);
    om.noalias() = xm * wm.transpose();
    const auto& bv = b.values();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out_dim; ++j) out[static_cast<std::size_t>(i) * out_dim + j] += bv[static_cast<std::size_t>(j)];
  }
  return Tensor::make_op(Shape{n, out_dim}, std::move(out), {x, w, b},
                         [n, in, out_dim](TensorNode& nd) {
                           auto& px = *nd.parents[0];
                           auto& pw = *nd.parents[1];
                           auto& pb = *nd.parents[2];
                           MapCM g(nd.grad.data(), n, out_dim);
                           if (px.requires_grad) {
                             px.ensure_grad();
                             MapM gx(px.grad.data(), n, in);
                             MapCM wm(pw.value.data(), out_dim, in);
                             gx.noalias() += g * wm;
                           }
                           if (pw.requires_grad) {
                             pw.ensure_grad();
                             MapM gw(pw.grad.data(), out_dim, in);
                             MapCM xm(px.value.data(), n, in);
                             gw.noalias() += g.transpose() * xm;
                           }
                           if (pb.requires_grad) {
                             pb.ensure_grad();
                             for (int i = 0; i < n; ++i)
                               for (int j = 0; j < out_dim; ++j)
                                 pb.grad[static_cast<std::size_t>(j)] += g(i, j);
                           }
                         });
}

}  // namespace ops
}  // namespace negflow

#endif  // NEGFLOW_OPS_HPP
