#pragma once

#include <Eigen/Core>
#include <cmath>
#include <numbers>

#include "miqa/tensor.hpp"

namespace miqa {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
ConstMatMap<T> as_matrix(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <class T>
MatMap<T> as_matrix(std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return MatMap<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> as_row(const std::vector<T>& v) {
  return Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(v.data(), static_cast<Eigen::Index>(v.size()));
}
template <class T>
Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> as_row(std::vector<T>& v) {
  return Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(v.data(), static_cast<Eigen::Index>(v.size()));
}
template <class T>
Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> as_col(const std::vector<T>& v) {
  return Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(v.data(), static_cast<Eigen::Index>(v.size()));
}
template <class T>
Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> as_col(std::vector<T>& v) {
  return Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  require(s.size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                shape_str(s));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// c[i,j] = sum_k a[i,k] b[k,j].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  using namespace detail;
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const auto m = a.dim(0), k = a.dim(1), p = b.dim(1);
  require(b.dim(0) == k, "matmul: inner extents differ " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  MacScope::add(static_cast<std::uint64_t>(m) * k * p);
  std::vector<T> out(m * p);
  as_matrix(out, m, p).noalias() = as_matrix(a.values(), m, k) * as_matrix(b.values(), k, p);
  return make_result<T>({m, p}, std::move(out), {&a, &b}, [m, k, p](Node<T>& self) {
    const auto dc = as_matrix(self.grad, m, p);
    if (auto* pa = grad_target(self, 0))
      as_matrix(pa->grad, m, k).noalias() += dc * as_matrix(self.parents[1]->data, k, p).transpose();
    if (auto* pb = grad_target(self, 1))
      as_matrix(pb->grad, k, p).noalias() += as_matrix(self.parents[0]->data, m, k).transpose() * dc;
  });
}

/// x[L x in] * w[in x out] + b[out], bias broadcast over rows.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  using namespace detail;
  require_rank(x.shape(), 2, "linear");
  require_rank(w.shape(), 2, "linear");
  const auto l = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  require(w.dim(0) == in, "linear: input width " + std::to_string(in) + " vs weight " + shape_str(w.shape()));
  require(b.numel() == out_dim, "linear: bias size mismatch");
  MacScope::add(static_cast<std::uint64_t>(l) * in * out_dim);
  std::vector<T> out(l * out_dim);
  auto y = as_matrix(out, l, out_dim);
  y.noalias() = as_matrix(x.values(), l, in) * as_matrix(w.values(), in, out_dim);
  y.rowwise() += as_row(b.values());
  return make_result<T>({l, out_dim}, std::move(out), {&x, &w, &b}, [l, in, out_dim](Node<T>& self) {
    const auto dy = as_matrix(self.grad, l, out_dim);
    if (auto* px = grad_target(self, 0))
      as_matrix(px->grad, l, in).noalias() += dy * as_matrix(self.parents[1]->data, in, out_dim).transpose();
    if (auto* pw = grad_target(self, 1))
      as_matrix(pw->grad, in, out_dim).noalias() += as_matrix(self.parents[0]->data, l, in).transpose() * dy;
    if (auto* pb = grad_target(self, 2)) as_row(pb->grad) += dy.colwise().sum();
  });
}

namespace detail {

struct ConvGeometry {
  std::size_t cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  require(w[1] == x[0], "conv2d: weight expects " + std::to_string(w[1]) + " input channels, got " +
                            std::to_string(x[0]));
  require((w[2] == 1 || w[2] == 3) && (w[3] == 1 || w[3] == 3), "conv2d: kernel must be 1x1 or 3x3");
  require(stride >= 1, "conv2d: stride must be positive");
  const auto span_h = x[1] + 2 * pad, span_w = x[2] + 2 * pad;
  require(span_h >= w[2] && span_w >= w[3], "conv2d: output extent < 1 for input " + shape_str(x));
  return {x[0], x[1], x[2], w[0], w[2], w[3], stride, pad, (span_h - w[2]) / stride + 1,
          (span_w - w[3]) / stride + 1};
}

template <class T>
std::vector<T> im2col(const std::vector<T>& x, const ConvGeometry& g) {
  std::vector<T> cols(g.patch() * g.pixels(), T(0));
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        T* dst = cols.data() + row * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dst[oy * g.wo + ox] = x[(c * g.h + iy) * g.w + ix];
          }
        }
      }
  return cols;
}

template <class T>
void col2im_add(const RowMat<T>& cols, std::vector<T>& dx, const ConvGeometry& g) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        const T* src = cols.data() + row * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(c * g.h + iy) * g.w + ix] += src[oy * g.wo + ox];
          }
        }
      }
}

template <class T>
Tensor<T> conv2d_impl(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b, std::size_t stride,
                      std::size_t pad) {
  const auto g = conv_geometry(x.shape(), w.shape(), stride, pad);
  if (b) require(b->numel() == g.cout, "conv2d: bias size mismatch");
  MacScope::add(static_cast<std::uint64_t>(g.cout) * g.patch() * g.pixels());
  auto cols = std::make_shared<std::vector<T>>(im2col(x.values(), g));
  std::vector<T> out(g.cout * g.pixels());
  auto y = as_matrix(out, g.cout, g.pixels());
  y.noalias() = as_matrix(w.values(), g.cout, g.patch()) * as_matrix(*cols, g.patch(), g.pixels());
  if (b) y.colwise() += as_col(b->values());

  auto back = [g, cols, has_bias = b != nullptr](Node<T>& self) {
    const auto dy = as_matrix(self.grad, g.cout, g.pixels());
    if (auto* pw = grad_target(self, 1))
      as_matrix(pw->grad, g.cout, g.patch()).noalias() += dy * as_matrix(*cols, g.patch(), g.pixels()).transpose();
    if (auto* px = grad_target(self, 0)) {
      RowMat<T> dcols = as_matrix(self.parents[1]->data, g.cout, g.patch()).transpose() * dy;
      col2im_add(dcols, px->grad, g);
    }
    if (has_bias)
      if (auto* pb = grad_target(self, 2)) as_col(pb->grad) += dy.rowwise().sum();
  };
  Shape shape{g.cout, g.ho, g.wo};
  if (b) return make_result<T>(std::move(shape), std::move(out), {&x, &w, b}, back);
  return make_result<T>(std::move(shape), std::move(out), {&x, &w}, back);
}

}  // namespace detail

/// Cross-correlation of x[Cin x H x W] with w[Cout x Cin x Kh x Kw], Kh,Kw in {1,3}.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride = 1, std::size_t padding = 0) {
  return detail::conv2d_impl<T>(x, w, nullptr, stride, padding);
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride = 1,
                 std::size_t padding = 0) {
  return detail::conv2d_impl<T>(x, w, &b, stride, padding);
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

/// x * Phi(x), Phi the standard normal CDF (erf form).
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  const auto& xs = x.values();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(xs[i] / std::numbers::sqrt2_v<T>));
    out[i] = xs[i] * cdf;
  }
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [](Node<T>& self) {
    auto* px = detail::grad_target(self, 0);
    if (!px) return;
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = px->data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v / std::numbers::sqrt2_v<T>));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      px->grad[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto* p = detail::grad_target(self, k))
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    if (auto* p = detail::grad_target(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] -= self.grad[i];
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * self.parents[1]->data[i];
    if (auto* p = detail::grad_target(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * self.parents[0]->data[i];
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * factor;
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [factor](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * factor;
  });
}

// ---------------------------------------------------------------------------
// Reductions (double accumulators)
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  return detail::make_result<T>({1}, {static_cast<T>(acc)}, {&x}, [](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0))
      for (auto& g : p->grad) g += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// mean((a - b)^2) over all elements.
template <class T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mse: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i]);
    acc += d * d;
  }
  const auto n = a.numel();
  return detail::make_result<T>({1}, {static_cast<T>(acc / static_cast<double>(n))}, {&a, &b}, [n](Node<T>& self) {
    const T k = T(2) * self.grad[0] / static_cast<T>(n);
    const auto& av = self.parents[0]->data;
    const auto& bv = self.parents[1]->data;
    if (auto* p = detail::grad_target(self, 0))
      for (std::size_t i = 0; i < n; ++i) p->grad[i] += k * (av[i] - bv[i]);
    if (auto* p = detail::grad_target(self, 1))
      for (std::size_t i = 0; i < n; ++i) p->grad[i] -= k * (av[i] - bv[i]);
  });
}

/// Exp-normalizes along `axis` with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto& s = x.shape();
  detail::require(axis < s.size(), "softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const auto n = s[axis];
  const auto& xs = x.values();
  std::vector<T> out(xs.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = xs[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xs[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const T e = std::exp(xs[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += static_cast<double>(e);
      }
      for (std::size_t k = 0; k < n; ++k)
        out[base + k * inner] = static_cast<T>(static_cast<double>(out[base + k * inner]) / total);
    }
  auto back = [outer, inner, n](Node<T>& self) {
    auto* p = detail::grad_target(self, 0);
    if (!p) return;
    const auto& y = self.data;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          dot += static_cast<double>(self.grad[base + k * inner]) * static_cast<double>(y[base + k * inner]);
        for (std::size_t k = 0; k < n; ++k) {
          const auto i = base + k * inner;
          p->grad[i] += y[i] * (self.grad[i] - static_cast<T>(dot));
        }
      }
  };
  return detail::make_result<T>(s, std::move(out), {&x}, back);
}

// ---------------------------------------------------------------------------
// Spatial resampling
// ---------------------------------------------------------------------------

/// Mean over bins [floor(i*H/oh), floor((i+1)*H/oh)) per axis. Requires oh<=H, ow<=W.
template <class T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, std::size_t oh, std::size_t ow) {
  detail::require_rank(x.shape(), 3, "adaptive_avg_pool2d");
  const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
  detail::require(oh >= 1 && ow >= 1 && oh <= h && ow <= w,
                  "adaptive_avg_pool2d: output " + std::to_string(oh) + "x" + std::to_string(ow) +
                      " larger than input " + shape_str(x.shape()));
  std::vector<T> out(c * oh * ow);
  const auto& xs = x.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i) {
      const auto y0 = i * h / oh, y1 = (i + 1) * h / oh;
      for (std::size_t j = 0; j < ow; ++j) {
        const auto x0 = j * w / ow, x1 = (j + 1) * w / ow;
        double acc = 0.0;
        for (auto y = y0; y < y1; ++y)
          for (auto xx = x0; xx < x1; ++xx) acc += static_cast<double>(xs[(ch * h + y) * w + xx]);
        out[(ch * oh + i) * ow + j] = static_cast<T>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
      }
    }
  return detail::make_result<T>({c, oh, ow}, std::move(out), {&x}, [c, h, w, oh, ow](Node<T>& self) {
    auto* p = detail::grad_target(self, 0);
    if (!p) return;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < oh; ++i) {
        const auto y0 = i * h / oh, y1 = (i + 1) * h / oh;
        for (std::size_t j = 0; j < ow; ++j) {
          const auto x0 = j * w / ow, x1 = (j + 1) * w / ow;
          const T g = self.grad[(ch * oh + i) * ow + j] / static_cast<T>((y1 - y0) * (x1 - x0));
          for (auto y = y0; y < y1; ++y)
            for (auto xx = x0; xx < x1; ++xx) p->grad[(ch * h + y) * w + xx] += g;
        }
      }
  });
}

/// Nearest-neighbour resize of x[C x h x w] to C x H x W; source index floor(i*h/H).
template <class T>
Tensor<T> upsample_nearest2d(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  detail::require_rank(x.shape(), 3, "upsample_nearest2d");
  detail::require(out_h >= 1 && out_w >= 1, "upsample_nearest2d: empty output");
  const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<T> out(c * out_h * out_w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j)
        out[(ch * out_h + i) * out_w + j] = x.values()[(ch * h + i * h / out_h) * w + j * w / out_w];
  return detail::make_result<T>({c, out_h, out_w}, std::move(out), {&x}, [c, h, w, out_h, out_w](Node<T>& self) {
    auto* p = detail::grad_target(self, 0);
    if (!p) return;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < out_h; ++i)
        for (std::size_t j = 0; j < out_w; ++j)
          p->grad[(ch * h + i * h / out_h) * w + j * w / out_w] += self.grad[(ch * out_h + i) * out_w + j];
  });
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::require(numel_of(shape) == x.numel(),
                  "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
  return detail::make_result<T>(std::move(shape), x.values(), {&x}, [](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

namespace detail {

/// Source offset for every destination element of permute(shape, order).
inline std::vector<std::size_t> permute_gather(const Shape& shape, const std::vector<std::size_t>& order) {
  const auto rank = shape.size();
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> stride_of_out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = shape[order[i]];
    stride_of_out[i] = in_stride[order[i]];
  }
  std::vector<std::size_t> gather(numel_of(shape));
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t dst = 0; dst < gather.size(); ++dst) {
    gather[dst] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      src += stride_of_out[d];
      if (idx[d] < out_shape[d]) break;
      src -= stride_of_out[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return gather;
}

}  // namespace detail

/// Output axis i is input axis order[i].
template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order) {
  const auto& s = x.shape();
  detail::require(order.size() == s.size(), "permute: order rank mismatch");
  std::vector<bool> used(order.size(), false);
  for (auto a : order) {
    detail::require(a < order.size() && !used[a], "permute: order is not a permutation");
    used[a] = true;
  }
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[order[i]];
  auto gather = std::make_shared<std::vector<std::size_t>>(detail::permute_gather(s, order));
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[(*gather)[i]];
  return detail::make_result<T>(std::move(out_shape), std::move(out), {&x}, [gather](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[(*gather)[i]] += self.grad[i];
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 2, "transpose");
  return permute(x, {1, 0});
}

/// Stacks equally shaped tensors along a new trailing axis: S -> S x N.
template <class T>
Tensor<T> stack_last(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "stack_last: no inputs");
  const auto& s = parts.front().shape();
  for (const auto& p : parts)
    detail::require(p.shape() == s, "stack_last: " + shape_str(p.shape()) + " vs " + shape_str(s));
  const auto n = parts.size(), m = parts.front().numel();
  std::vector<T> out(m * n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < m; ++i) out[i * n + k] = parts[k].values()[i];
  Shape shape = s;
  shape.push_back(n);
  return detail::make_result<T>(std::move(shape), std::move(out), parts, [n, m](Node<T>& self) {
    for (std::size_t k = 0; k < n; ++k)
      if (auto* p = detail::grad_target(self, k))
        for (std::size_t i = 0; i < m; ++i) p->grad[i] += self.grad[i * n + k];
  });
}

/// Mean over the trailing axis: S x N -> S.
template <class T>
Tensor<T> mean_last(const Tensor<T>& x) {
  detail::require(x.ndim() >= 2, "mean_last: need rank >= 2");
  const auto n = x.shape().back(), m = x.numel() / n;
  std::vector<T> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += static_cast<double>(x.values()[i * n + k]);
    out[i] = static_cast<T>(acc / static_cast<double>(n));
  }
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  return detail::make_result<T>(std::move(shape), std::move(out), {&x}, [n, m](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < n; ++k) p->grad[i * n + k] += self.grad[i] / static_cast<T>(n);
  });
}

}  // namespace miqa
