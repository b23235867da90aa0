#ifndef NEGFLOW_OPTIM_HPP
#define NEGFLOW_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "negflow/nn.hpp"
#include "negflow/tensor.hpp"

namespace negflow {
namespace optim {

/// Cosine decay from lr0 to lr_min over t_max steps, then flat at lr_min.
inline double cosine_lr(double lr0, double lr_min, std::int64_t t, std::int64_t t_max) {
  if (t >= t_max || t_max <= 0) return lr_min;
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(kPi * static_cast<double>(t) / static_cast<double>(t_max)));
}

class Optimizer {
 public:
  explicit Optimizer(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {}
  virtual ~Optimizer() = default;

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::int64_t step_count() const { return t_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  virtual void step() = 0;

  virtual void save_state(std::ostream& os) const = 0;
  virtual void load_state(std::istream& is) = 0;

 protected:
  static void write_vec(std::ostream& os, const std::vector<double>& v) {
    const std::uint64_t n = v.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  }
  static void read_vec(std::istream& is, std::vector<double>& v) {
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    v.resize(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw FormatError("optimizer state: truncated stream");
  }

  std::vector<Tensor> params_;
  double lr_;
  std::int64_t t_ = 0;
};

class Adam : public Optimizer {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : Optimizer(std::move(params), lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void step() override {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& val = params_[k].mutable_values();
      const auto& g = params_[k].grad();
      if (g.empty()) continue;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        val[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      }
    }
  }

  void save_state(std::ostream& os) const override {
    os.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      write_vec(os, m_[k]);
      write_vec(os, v_[k]);
    }
  }
  void load_state(std::istream& is) override {
    is.read(reinterpret_cast<char*>(&t_), sizeof(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      read_vec(is, m_[k]);
      read_vec(is, v_[k]);
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
};

/// Adam variant with an infinity-norm second moment.
class Adamax : public Optimizer {
 public:
  Adamax(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
      : Optimizer(std::move(params), lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      u_.emplace_back(p.numel(), 0.0);
    }
  }

  void step() override {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& val = params_[k].mutable_values();
      const auto& g = params_[k].grad();
      if (g.empty()) continue;
      auto& m = m_[k];
      auto& u = u_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        u[i] = std::max(beta2_ * u[i], std::abs(g[i]));
        val[i] -= lr_ * (m[i] / bc1) / (u[i] + eps_);
      }
    }
  }

  void save_state(std::ostream& os) const override {
    os.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      write_vec(os, m_[k]);
      write_vec(os, u_[k]);
    }
  }
  void load_state(std::istream& is) override {
    is.read(reinterpret_cast<char*>(&t_), sizeof(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      read_vec(is, m_[k]);
      read_vec(is, u_[k]);
    }
  }

 private:
  double beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, u_;
};

}  // namespace optim
}  // namespace negflow

#endif  // NEGFLOW_OPTIM_HPP
