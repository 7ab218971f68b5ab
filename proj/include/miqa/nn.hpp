#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "miqa/ops.hpp"
#include "miqa/rng.hpp"

namespace miqa {

/// Kaiming-uniform draw: U(-b, b), b = gain * sqrt(3 / fan_in). Draws are made
/// in double so float and double models built from one seed agree to rounding.
template <class T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, double gain, Rng& rng) {
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  std::vector<T> v(numel_of(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <class T>
Tensor<T> zero_param(Shape shape) {
  return Tensor<T>::zeros(std::move(shape), true);
}

inline constexpr double kGeluGain = std::numbers::sqrt2;

template <class T>
struct Linear {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // out

  Linear() = default;
  Linear(std::size_t in, std::size_t out, double gain, Rng& rng)
      : weight(kaiming_uniform<T>({in, out}, in, gain, rng)), bias(zero_param<T>({out})) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <class T>
struct Conv2d {
  Tensor<T> weight;  // out x in x k x k
  Tensor<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, std::size_t padding_,
         double gain, Rng& rng)
      : weight(kaiming_uniform<T>({out, in, kernel, kernel}, in * kernel * kernel, gain, rng)),
        bias(zero_param<T>({out})),
        stride(stride_),
        padding(padding_) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

/// Single-head scaled dot-product self-attention over tokens[L x E] with
/// learned query/key/value/output projections.
template <class T>
struct SelfAttention {
  Linear<T> query, key, value, output;

  SelfAttention() = default;
  SelfAttention(std::size_t embed, Rng& rng)
      : query(embed, embed, 1.0, rng),
        key(embed, embed, 1.0, rng),
        value(embed, embed, 1.0, rng),
        output(embed, embed, 1.0, rng) {}

  std::size_t embed() const { return query.weight.dim(0); }

  /// `weights`, when given, receives the L x L attention matrix.
  Tensor<T> operator()(const Tensor<T>& tokens, Tensor<T>* weights = nullptr) const {
    detail::require_rank(tokens.shape(), 2, "self_attention");
    detail::require(tokens.dim(1) == embed(), "self_attention: token width " + std::to_string(tokens.dim(1)) +
                                                  " vs embed " + std::to_string(embed()));
    const auto q = query(tokens);
    const auto k = key(tokens);
    const auto v = value(tokens);
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(embed()));
    const auto attn = softmax(scale(matmul(q, transpose(k)), inv_sqrt), 1);
    if (weights) *weights = attn;
    return output(matmul(attn, v));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    query.visit(prefix + ".query", f);
    key.visit(prefix + ".key", f);
    value.visit(prefix + ".value", f);
    output.visit(prefix + ".output", f);
  }
};

}  // namespace miqa
