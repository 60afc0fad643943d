#pragma once

// Minimal reverse-mode automatic differentiation over rank-3 tensors.
//
// Every backward rule is written in terms of the differentiable ops below, so
// calling grad() with create_graph=true yields gradients that can themselves
// be differentiated. The critic's gradient penalty relies on this.

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "otfmri/core/error.hpp"
#include "otfmri/core/tensor.hpp"

namespace otfmri::ag {

inline thread_local bool grad_mode_enabled = true;

// Disables graph recording in the enclosing scope.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode_enabled) { grad_mode_enabled = false; }
  ~NoGradGuard() { grad_mode_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : prev_(grad_mode_enabled) { grad_mode_enabled = enabled; }
  ~GradModeGuard() { grad_mode_enabled = prev_; }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
class Var;

template <class T>
struct Node {
  Tensor<T> value;
  std::vector<Var<T>> inputs;
  std::function<std::vector<Var<T>>(const Var<T>&)> backward;
  bool requires_grad = false;
  const char* op = "leaf";
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  Node<T>* node() const { return node_.get(); }
  T item() const { return node_->value.item(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var<T>(std::move(n));
}

template <class T>
Var<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

template <class T>
Var<T> detach(const Var<T>& v) {
  return constant(v.value());
}

namespace detail {

template <class T, class Backward>
Var<T> make_op(const char* op, Tensor<T> value, std::vector<Var<T>> inputs, Backward&& backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = op;
  bool needs = false;
  if (grad_mode_enabled)
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::forward<Backward>(backward);
  }
  return Var<T>(std::move(n));
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out;
  for (int ax = 0; ax < 3; ++ax) {
    const auto x = a[ax], y = b[ax];
    if (x != y && x != 1 && y != 1)
      throw ConfigError("incompatible shapes for broadcasting: " + a.str() + " vs " + b.str());
    const auto m = std::max(x, y);
    (ax == 0 ? out.n : ax == 1 ? out.c : out.l) = m;
  }
  return out;
}

template <class T, class F>
Tensor<T> broadcast_binary(const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  const Shape s = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(s);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t l = 0; l < s.l; ++l)
        out(i, c, l) = f(a(sa.n == 1 ? 0 : i, sa.c == 1 ? 0 : c, sa.l == 1 ? 0 : l),
                         b(sb.n == 1 ? 0 : i, sb.c == 1 ? 0 : c, sb.l == 1 ? 0 : l));
  return out;
}

template <class T, class F>
Tensor<T> map(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) po[i] = f(pa[i]);
  return out;
}

template <class T>
Tensor<T> sum_to(const Tensor<T>& a, const Shape& target) {
  const auto& s = a.shape();
  for (int ax = 0; ax < 3; ++ax)
    if (target[ax] != 1 && target[ax] != s[ax])
      throw ConfigError("cannot reduce " + s.str() + " to " + target.str());
  if (s == target) return a;
  Tensor<T> out(target);
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t l = 0; l < s.l; ++l)
        out(target.n == 1 ? 0 : i, target.c == 1 ? 0 : c, target.l == 1 ? 0 : l) += a(i, c, l);
  return out;
}

template <class T>
Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& target) {
  const auto& s = a.shape();
  for (int ax = 0; ax < 3; ++ax)
    if (s[ax] != 1 && s[ax] != target[ax])
      throw ConfigError("cannot broadcast " + s.str() + " to " + target.str());
  if (s == target) return a;
  Tensor<T> out(target);
  for (std::size_t i = 0; i < target.n; ++i)
    for (std::size_t c = 0; c < target.c; ++c)
      for (std::size_t l = 0; l < target.l; ++l)
        out(i, c, l) = a(s.n == 1 ? 0 : i, s.c == 1 ? 0 : c, s.l == 1 ? 0 : l);
  return out;
}

// ---- 1D convolution kernels -------------------------------------------------
//
// y[b,o,j] = sum_{i,k} w[o,i,k] * x[b,i,j*stride + k - pad]
//
// The three functions below are the forward map and its two adjoints; each is
// the gradient of the trilinear form <conv(x, w), y> with respect to one
// argument, which is what closes the op family under differentiation.

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

inline std::size_t conv_out_length(std::size_t length, std::size_t kernel, ConvGeometry g) {
  if (length + 2 * g.pad < kernel) throw ConfigError("convolution kernel larger than padded input");
  return (length + 2 * g.pad - kernel) / g.stride + 1;
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
RowMat<T> im2col(const Tensor<T>& x, std::size_t kernel, ConvGeometry g, std::size_t out_len) {
  const auto [batch, cin, len] = x.shape();
  RowMat<T> cols = RowMat<T>::Zero(static_cast<Eigen::Index>(cin * kernel), static_cast<Eigen::Index>(batch * out_len));
  for (std::size_t i = 0; i < cin; ++i)
    for (std::size_t k = 0; k < kernel; ++k) {
      T* row = cols.data() + (i * kernel + k) * batch * out_len;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* src = x.data() + (b * cin + i) * len;
        T* dst = row + b * out_len;
        for (std::size_t j = 0; j < out_len; ++j) {
          const auto pos = static_cast<std::ptrdiff_t>(j * g.stride + k) - static_cast<std::ptrdiff_t>(g.pad);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dst[j] = src[pos];
        }
      }
    }
  return cols;
}

template <class T>
Tensor<T> col2im(const RowMat<T>& cols, Shape x_shape, std::size_t kernel, ConvGeometry g, std::size_t out_len) {
  const auto [batch, cin, len] = x_shape;
  Tensor<T> x(x_shape);
  for (std::size_t i = 0; i < cin; ++i)
    for (std::size_t k = 0; k < kernel; ++k) {
      const T* row = cols.data() + (i * kernel + k) * batch * out_len;
      for (std::size_t b = 0; b < batch; ++b) {
        T* dst = x.data() + (b * cin + i) * len;
        const T* src = row + b * out_len;
        for (std::size_t j = 0; j < out_len; ++j) {
          const auto pos = static_cast<std::ptrdiff_t>(j * g.stride + k) - static_cast<std::ptrdiff_t>(g.pad);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dst[pos] += src[j];
        }
      }
    }
  return x;
}

// (B, C, L) -> C x (B*L)
template <class T>
RowMat<T> channels_major(const Tensor<T>& y) {
  const auto [batch, ch, len] = y.shape();
  RowMat<T> m(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(batch * len));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      std::copy_n(y.data() + (b * ch + c) * len, len, m.data() + c * batch * len + b * len);
  return m;
}

template <class T>
Tensor<T> batch_major(const RowMat<T>& m, std::size_t batch, std::size_t len) {
  const auto ch = static_cast<std::size_t>(m.rows());
  Tensor<T> y(Shape{batch, ch, len});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      std::copy_n(m.data() + c * batch * len + b * len, len, y.data() + (b * ch + c) * len);
  return y;
}

template <class T>
Eigen::Map<const RowMat<T>> weight_matrix(const Tensor<T>& w) {
  const auto [cout, cin, kernel] = w.shape();
  return {w.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * kernel)};
}

template <class T>
Tensor<T> conv1d_kernel(const Tensor<T>& x, const Tensor<T>& w, ConvGeometry g) {
  if (x.shape().c != w.shape().c)
    throw ConfigError("conv1d channel mismatch: input " + x.shape().str() + ", weight " + w.shape().str());
  const std::size_t out_len = conv_out_length(x.shape().l, w.shape().l, g);
  const RowMat<T> cols = im2col(x, w.shape().l, g, out_len);
  const RowMat<T> y = weight_matrix(w) * cols;
  return batch_major(y, x.shape().n, out_len);
}

template <class T>
Tensor<T> conv1d_input_grad_kernel(const Tensor<T>& gy, const Tensor<T>& w, ConvGeometry g, std::size_t in_len) {
  if (gy.shape().c != w.shape().n)
    throw ConfigError("conv1d adjoint channel mismatch: grad " + gy.shape().str() + ", weight " + w.shape().str());
  const std::size_t out_len = conv_out_length(in_len, w.shape().l, g);
  if (out_len != gy.shape().l) throw ConfigError("conv1d adjoint length mismatch");
  const RowMat<T> gm = channels_major(gy);
  const RowMat<T> dcols = weight_matrix(w).transpose() * gm;
  return col2im(dcols, Shape{gy.shape().n, w.shape().c, in_len}, w.shape().l, g, out_len);
}

template <class T>
Tensor<T> conv1d_weight_grad_kernel(const Tensor<T>& x, const Tensor<T>& gy, ConvGeometry g, std::size_t kernel) {
  const std::size_t out_len = conv_out_length(x.shape().l, kernel, g);
  if (out_len != gy.shape().l || x.shape().n != gy.shape().n) throw ConfigError("conv1d weight-grad shape mismatch");
  const RowMat<T> cols = im2col(x, kernel, g, out_len);
  const RowMat<T> gm = channels_major(gy);
  Tensor<T> dw(Shape{gy.shape().c, x.shape().c, kernel});
  Eigen::Map<RowMat<T>>(dw.data(), static_cast<Eigen::Index>(gy.shape().c),
                        static_cast<Eigen::Index>(x.shape().c * kernel)).noalias() = gm * cols.transpose();
  return dw;
}

}  // namespace detail

// ---- differentiable ops ----------------------------------------------------

template <class T>
Var<T> sum_to(const Var<T>& a, Shape target);
template <class T>
Var<T> broadcast_to(const Var<T>& a, Shape target);
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto out = detail::broadcast_binary(a.value(), b.value(), [](T x, T y) { return x + y; });
  return detail::make_op<T>("add", std::move(out), {a, b}, [a, b](const Var<T>& g) {
    return std::vector<Var<T>>{sum_to(g, a.shape()), sum_to(g, b.shape())};
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  auto out = detail::map(a.value(), [factor](T x) { return x * factor; });
  return detail::make_op<T>("scale", std::move(out), {a},
                            [factor](const Var<T>& g) { return std::vector<Var<T>>{scale(g, factor)}; });
}

template <class T>
Var<T> neg(const Var<T>& a) {
  return scale(a, T(-1));
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return add(a, neg(b));
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
  auto out = detail::map(a.value(), [c](T x) { return x + c; });
  return detail::make_op<T>("add_scalar", std::move(out), {a},
                            [](const Var<T>& g) { return std::vector<Var<T>>{g}; });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  auto out = detail::broadcast_binary(a.value(), b.value(), [](T x, T y) { return x * y; });
  return detail::make_op<T>("mul", std::move(out), {a, b}, [a, b](const Var<T>& g) {
    return std::vector<Var<T>>{sum_to(mul(g, b), a.shape()), sum_to(mul(g, a), b.shape())};
  });
}

template <class T>
Var<T> sum_to(const Var<T>& a, Shape target) {
  if (a.shape() == target) return a;
  auto out = detail::sum_to(a.value(), target);
  const Shape src = a.shape();
  return detail::make_op<T>("sum_to", std::move(out), {a},
                            [src](const Var<T>& g) { return std::vector<Var<T>>{broadcast_to(g, src)}; });
}

template <class T>
Var<T> broadcast_to(const Var<T>& a, Shape target) {
  if (a.shape() == target) return a;
  auto out = detail::broadcast_to(a.value(), target);
  const Shape src = a.shape();
  return detail::make_op<T>("broadcast_to", std::move(out), {a},
                            [src](const Var<T>& g) { return std::vector<Var<T>>{sum_to(g, src)}; });
}

template <class T>
Var<T> sum_all(const Var<T>& a) {
  return sum_to(a, Shape{1, 1, 1});
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.value().size()));
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape target) {
  if (a.shape() == target) return a;
  auto out = a.value().reshaped(target);
  const Shape src = a.shape();
  return detail::make_op<T>("reshape", std::move(out), {a},
                            [src](const Var<T>& g) { return std::vector<Var<T>>{reshape(g, src)}; });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  auto out = detail::map(a.value(), [](T x) { return x > T(0) ? x : T(0); });
  return detail::make_op<T>("relu", std::move(out), {a}, [a](const Var<T>& g) {
    auto mask = detail::map(a.value(), [](T x) { return x > T(0) ? T(1) : T(0); });
    return std::vector<Var<T>>{mul(g, constant(std::move(mask)))};
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  auto out = detail::map(a.value(), [slope](T x) { return x > T(0) ? x : slope * x; });
  return detail::make_op<T>("leaky_relu", std::move(out), {a}, [a, slope](const Var<T>& g) {
    auto mask = detail::map(a.value(), [slope](T x) { return x > T(0) ? T(1) : slope; });
    return std::vector<Var<T>>{mul(g, constant(std::move(mask)))};
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  auto out = detail::map(a.value(), [](T x) { return T(1) / (T(1) + std::exp(-x)); });
  return detail::make_op<T>("sigmoid", std::move(out), {a}, [a](const Var<T>& g) {
    const auto s = sigmoid(a);
    const auto one_minus = add_scalar(neg(s), T(1));
    return std::vector<Var<T>>{mul(g, mul(s, one_minus))};
  });
}

template <class T>
Var<T> square(const Var<T>& a) {
  auto out = detail::map(a.value(), [](T x) { return x * x; });
  return detail::make_op<T>("square", std::move(out), {a},
                            [a](const Var<T>& g) { return std::vector<Var<T>>{mul(g, scale(a, T(2)))}; });
}

// 1/x with the convention 1/0 = 0.
template <class T>
Var<T> safe_reciprocal(const Var<T>& a) {
  auto out = detail::map(a.value(), [](T x) { return x == T(0) ? T(0) : T(1) / x; });
  return detail::make_op<T>("safe_reciprocal", std::move(out), {a}, [a](const Var<T>& g) {
    const auto r = safe_reciprocal(a);
    return std::vector<Var<T>>{neg(mul(g, square(r)))};
  });
}

// sqrt with a zero subgradient at 0.
template <class T>
Var<T> sqrt(const Var<T>& a) {
  auto out = detail::map(a.value(), [](T x) { return std::sqrt(x); });
  return detail::make_op<T>("sqrt", std::move(out), {a}, [a](const Var<T>& g) {
    return std::vector<Var<T>>{scale(mul(g, safe_reciprocal(sqrt(a))), T(0.5))};
  });
}

template <class T>
Var<T> conv1d_input_grad(const Var<T>& gy, const Var<T>& w, std::size_t stride, std::size_t pad, std::size_t in_len);
template <class T>
Var<T> conv1d_weight_grad(const Var<T>& x, const Var<T>& gy, std::size_t stride, std::size_t pad, std::size_t kernel);

// x: (B, Cin, L), w: (Cout, Cin, K) -> (B, Cout, Lout)
template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, std::size_t stride = 1, std::size_t pad = 0) {
  auto out = detail::conv1d_kernel(x.value(), w.value(), {stride, pad});
  return detail::make_op<T>("conv1d", std::move(out), {x, w}, [x, w, stride, pad](const Var<T>& g) {
    return std::vector<Var<T>>{conv1d_input_grad(g, w, stride, pad, x.shape().l),
                               conv1d_weight_grad(x, g, stride, pad, w.shape().l)};
  });
}

// Adjoint of conv1d in its input; with roles swapped this is the transposed
// convolution. gy: (B, Cout, Lout), w: (Cout, Cin, K) -> (B, Cin, in_len)
template <class T>
Var<T> conv1d_input_grad(const Var<T>& gy, const Var<T>& w, std::size_t stride, std::size_t pad, std::size_t in_len) {
  auto out = detail::conv1d_input_grad_kernel(gy.value(), w.value(), {stride, pad}, in_len);
  return detail::make_op<T>("conv1d_input_grad", std::move(out), {gy, w}, [gy, w, stride, pad](const Var<T>& h) {
    return std::vector<Var<T>>{conv1d(h, w, stride, pad), conv1d_weight_grad(h, gy, stride, pad, w.shape().l)};
  });
}

// Adjoint of conv1d in its weight. x: (B, Cin, L), gy: (B, Cout, Lout) -> (Cout, Cin, K)
template <class T>
Var<T> conv1d_weight_grad(const Var<T>& x, const Var<T>& gy, std::size_t stride, std::size_t pad, std::size_t kernel) {
  auto out = detail::conv1d_weight_grad_kernel(x.value(), gy.value(), {stride, pad}, kernel);
  return detail::make_op<T>("conv1d_weight_grad", std::move(out), {x, gy}, [x, gy, stride, pad](const Var<T>& h) {
    return std::vector<Var<T>>{conv1d_input_grad(gy, h, stride, pad, x.shape().l), conv1d(x, h, stride, pad)};
  });
}

// Transposed convolution. x: (B, Cin, L), w: (Cin, Cout, K) -> (B, Cout, (L-1)*stride - 2*pad + K)
template <class T>
Var<T> conv_transpose1d(const Var<T>& x, const Var<T>& w, std::size_t stride, std::size_t pad) {
  const std::size_t out_len = (x.shape().l - 1) * stride + w.shape().l - 2 * pad;
  return conv1d_input_grad(x, w, stride, pad, out_len);
}

template <class T>
Var<T> embed_channels(const Var<T>& a, std::size_t start, std::size_t total);

template <class T>
Var<T> slice_channels(const Var<T>& a, std::size_t start, std::size_t count) {
  const auto [batch, ch, len] = a.shape();
  if (start + count > ch) throw ConfigError("channel slice out of range");
  Tensor<T> out(Shape{batch, count, len});
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(a.value().data() + (b * ch + start) * len, count * len, out.data() + b * count * len);
  return detail::make_op<T>("slice_channels", std::move(out), {a}, [start, ch](const Var<T>& g) {
    return std::vector<Var<T>>{embed_channels(g, start, ch)};
  });
}

// Places a at channel offset `start` inside a zero tensor with `total` channels.
template <class T>
Var<T> embed_channels(const Var<T>& a, std::size_t start, std::size_t total) {
  const auto [batch, ch, len] = a.shape();
  if (start + ch > total) throw ConfigError("channel embed out of range");
  Tensor<T> out(Shape{batch, total, len});
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(a.value().data() + b * ch * len, ch * len, out.data() + (b * total + start) * len);
  return detail::make_op<T>("embed_channels", std::move(out), {a}, [start, ch](const Var<T>& g) {
    return std::vector<Var<T>>{slice_channels(g, start, ch)};
  });
}

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  if (a.shape().n != b.shape().n || a.shape().l != b.shape().l)
    throw ConfigError("concat shape mismatch: " + a.shape().str() + " vs " + b.shape().str());
  const std::size_t ca = a.shape().c, cb = b.shape().c, len = a.shape().l;
  Tensor<T> out(Shape{a.shape().n, ca + cb, len});
  for (std::size_t i = 0; i < a.shape().n; ++i) {
    std::copy_n(a.value().data() + i * ca * len, ca * len, out.data() + i * (ca + cb) * len);
    std::copy_n(b.value().data() + i * cb * len, cb * len, out.data() + (i * (ca + cb) + ca) * len);
  }
  return detail::make_op<T>("concat_channels", std::move(out), {a, b}, [ca, cb](const Var<T>& g) {
    return std::vector<Var<T>>{slice_channels(g, 0, ca), slice_channels(g, ca, cb)};
  });
}

template <class T>
Var<T> crop_length(const Var<T>& a, std::size_t len);

// Zero-pads the length axis on the right up to `len`.
template <class T>
Var<T> pad_length(const Var<T>& a, std::size_t len) {
  const auto [batch, ch, src] = a.shape();
  if (len == src) return a;
  if (len < src) throw ConfigError("pad_length target shorter than input");
  Tensor<T> out(Shape{batch, ch, len});
  for (std::size_t r = 0; r < batch * ch; ++r) std::copy_n(a.value().data() + r * src, src, out.data() + r * len);
  return detail::make_op<T>("pad_length", std::move(out), {a},
                            [src](const Var<T>& g) { return std::vector<Var<T>>{crop_length(g, src)}; });
}

// Keeps the first `len` positions of the length axis.
template <class T>
Var<T> crop_length(const Var<T>& a, std::size_t len) {
  const auto [batch, ch, src] = a.shape();
  if (len == src) return a;
  if (len > src) throw ConfigError("crop_length target longer than input");
  Tensor<T> out(Shape{batch, ch, len});
  for (std::size_t r = 0; r < batch * ch; ++r) std::copy_n(a.value().data() + r * src, len, out.data() + r * len);
  return detail::make_op<T>("crop_length", std::move(out), {a},
                            [src](const Var<T>& g) { return std::vector<Var<T>>{pad_length(g, src)}; });
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

// ---- reverse sweep ----------------------------------------------------------

// Gradients of sum(output) with respect to each of `inputs`. Inputs that the
// output does not depend on receive zeros. With create_graph the returned
// gradients are themselves differentiable.
template <class T>
std::vector<Var<T>> grad(const Var<T>& output, const std::vector<Var<T>>& inputs, bool create_graph = false) {
  std::vector<Var<T>> result(inputs.size());
  if (!output.requires_grad()) {
    for (std::size_t i = 0; i < inputs.size(); ++i) result[i] = constant(Tensor<T>(inputs[i].shape()));
    return result;
  }

  // Post-order DFS gives a topological order (inputs before consumers).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{output.node(), 0}};
  seen.insert(output.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].node();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  GradModeGuard mode(create_graph);
  std::unordered_map<Node<T>*, Var<T>> grads;
  grads[output.node()] = constant(Tensor<T>(output.shape(), T(1)));

  std::unordered_set<Node<T>*> wanted;
  for (const auto& in : inputs) wanted.insert(in.node());

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    if (!node->backward) continue;
    const Var<T> g = found->second;
    if (!wanted.contains(node)) grads.erase(found);
    auto parent_grads = node->backward(g);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      Node<T>* parent = node->inputs[i].node();
      if (!parent->requires_grad) continue;
      auto [slot, inserted] = grads.try_emplace(parent, parent_grads[i]);
      if (!inserted) slot->second = add(slot->second, parent_grads[i]);
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto found = grads.find(inputs[i].node());
    result[i] = found != grads.end() ? found->second : constant(Tensor<T>(inputs[i].shape()));
  }
  return result;
}

}  // namespace otfmri::ag
