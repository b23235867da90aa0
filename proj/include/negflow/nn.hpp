#ifndef NEGFLOW_NN_HPP
#define NEGFLOW_NN_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "negflow/ops.hpp"
#include "negflow/ops_image.hpp"
#include "negflow/rng.hpp"

namespace negflow {
namespace nn {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

inline void append_params(ParamList& dst, const std::string& prefix, const ParamList& src) {
  for (const auto& p : src) dst.push_back({prefix + "." + p.name, p.tensor});
}

inline Tensor he_normal(Shape shape, std::int64_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.normal(0.0, std);
  return Tensor::from_values(std::move(shape), std::move(v), true);
}

inline Tensor zeros_param(Shape shape) { return Tensor(std::move(shape), 0.0, true); }

struct Linear {
  Tensor w, b;

  Linear() = default;
  Linear(int in, int out, Rng& rng, bool zero_init = false) {
    w = zero_init ? zeros_param({out, in}) : he_normal({out, in}, in, rng);
    b = zeros_param({out});
  }

  Tensor forward(const Tensor& x) const { return ops::linear(x, w, b); }

  ParamList parameters() const { return {{"w", w}, {"b", b}}; }
};

struct Conv2d {
  Tensor w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, Rng& rng, int stride_ = 1, int pad_ = -1,
         bool zero_init = false)
      : stride(stride_), pad(pad_ < 0 ? k / 2 : pad_) {
    const std::int64_t fan_in = static_cast<std::int64_t>(in_ch) * k * k;
    w = zero_init ? zeros_param({out_ch, in_ch, k, k}) : he_normal({out_ch, in_ch, k, k}, fan_in, rng);
    b = zeros_param({out_ch});
  }

  Tensor forward(const Tensor& x) const { return ops::conv2d(x, w, b, stride, pad); }

  ParamList parameters() const { return {{"w", w}, {"b", b}}; }
};

/// Batch statistics in training, running statistics in evaluation.
struct BatchNorm2d {
  Tensor gamma, beta;
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels) {
    gamma = Tensor(Shape{channels}, 1.0, true);
    beta = zeros_param({channels});
    running_mean.assign(static_cast<std::size_t>(channels), 0.0);
    running_var.assign(static_cast<std::size_t>(channels), 1.0);
  }

  Tensor forward(const Tensor& x, bool train) {
    if (train) {
      std::vector<double> m, v;
      Tensor out = ops::batchnorm2d_train(x, gamma, beta, eps, &m, &v);
      for (std::size_t c = 0; c < m.size(); ++c) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * m[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * v[c];
      }
      return out;
    }
    const int c = static_cast<int>(running_mean.size());
    std::vector<double> scale(static_cast<std::size_t>(c)), bias(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) {
      const double inv = 1.0 / std::sqrt(running_var[static_cast<std::size_t>(i)] + eps);
      scale[static_cast<std::size_t>(i)] = gamma[i] * inv;
      bias[static_cast<std::size_t>(i)] = beta[i] - gamma[i] * running_mean[static_cast<std::size_t>(i)] * inv;
    }
    return ops::channel_affine(x, Tensor::from_values({c}, std::move(scale)),
                               Tensor::from_values({c}, std::move(bias)));
  }

  ParamList parameters() const { return {{"gamma", gamma}, {"beta", beta}}; }

  // Running statistics live outside the parameter list; checkpoints carry
  // them through these accessors.
  std::vector<std::pair<std::string, std::vector<double>*>> buffers() {
    return {{"running_mean", &running_mean}, {"running_var", &running_var}};
  }
};

}  // namespace nn
}  // namespace negflow

#endif  // NEGFLOW_NN_HPP
