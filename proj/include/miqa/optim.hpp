#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "miqa/tensor.hpp"

namespace miqa {

/// lr_min + (lr_max - lr_min) * (1 + cos(pi * (t mod period) / period)) / 2
inline double cosine_lr(std::size_t step, std::size_t period, double lr_max, double lr_min) {
  if (period == 0) throw ContractError("cosine_lr: period must be positive");
  const double phase = static_cast<double>(step % period) / static_cast<double>(period);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

/// Adam with decoupled weight decay. Holds one moment pair per parameter, in
/// the order the parameters were registered.
template <class T>
class Adam {
 public:
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  Adam(std::vector<Tensor<T>> params, double lr, double weight_decay)
      : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {
    for (const auto& p : params_) {
      first_.emplace_back(p.numel(), 0.0);
      second_.emplace_back(p.numel(), 0.0);
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  double weight_decay() const { return weight_decay_; }
  std::size_t steps() const { return t_; }

  /// Applies one update from the populated gradients, then zeroes them.
  void step() {
    for (std::size_t k = 0; k < params_.size(); ++k)
      if (!params_[k].has_grad())
        throw ContractError("adam step: parameter " + std::to_string(k) + " has no gradient");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      auto w = p.mutable_data();
      auto g = p.mutable_grad();
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        double wi = static_cast<double>(w[i]);
        const double gi = static_cast<double>(g[i]);
        wi -= lr_ * weight_decay_ * wi;
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
        const double mhat = m[i] / c1, vhat = v[i] / c2;
        wi -= lr_ * mhat / (std::sqrt(vhat) + eps);
        w[i] = static_cast<T>(wi);
      }
      p.zero_grad();
    }
  }

  const std::vector<double>& first_moment(std::size_t k) const { return first_.at(k); }
  const std::vector<double>& second_moment(std::size_t k) const { return second_.at(k); }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> first_, second_;
  std::size_t t_ = 0;
  double lr_, weight_decay_;
};

}  // namespace miqa
