#ifndef NEGFLOW_TEST_SUPPORT_HPP
#define NEGFLOW_TEST_SUPPORT_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "negflow/rng.hpp"
#include "negflow/tensor.hpp"

namespace test_support {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / (std::max(std::abs(a), std::abs(b)) + 1e-6);
}

/// Central finite differences of a scalar-valued function with respect to
/// every entry of `param`, compared against the autograd gradient.
/// Returns the worst relative error.
inline double max_grad_rel_err(negflow::Tensor param,
                               const std::function<negflow::Tensor()>& loss_fn,
                               double h = 1e-5) {
  param.zero_grad();
  negflow::Tensor loss = loss_fn();
  loss.backward();
  std::vector<double> analytic = param.grad();
  if (analytic.empty()) analytic.assign(param.values().size(), 0.0);

  double worst = 0.0;
  auto& vals = param.mutable_values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double orig = vals[i];
    const double step = h * std::max(1.0, std::abs(orig));
    vals[i] = orig + step;
    const double up = loss_fn().item();
    vals[i] = orig - step;
    const double dn = loss_fn().item();
    vals[i] = orig;
    const double fd = (up - dn) / (2.0 * step);
    worst = std::max(worst, rel_err(analytic[i], fd));
  }
  return worst;
}

inline std::vector<double> random_vec(std::size_t n, negflow::Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace test_support

#endif
