#pragma once

// Differentiable free functions over Tensor. Shapes must match exactly;
// the only broadcast is a per-channel bias (add_channel_bias, linear).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bnc/tensor.hpp"

namespace bnc {

namespace detail {

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() == b.shape()) return;
  if (a.rank() != b.rank())
    throw ShapeError(std::string(op) + ": rank mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  for (int i = 0; i < a.rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw ShapeError(std::string(op) + ": dimension " + std::to_string(i) + " differs (" +
                       std::to_string(a.dim(i)) + " vs " + std::to_string(b.dim(i)) + ")");
}

inline int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError(std::string(op) + ": axis out of range");
  return axis;
}

// Splits a shape around `axis` into (outer, n, inner) extents.
struct AxisView {
  Index outer, n, inner;
};

inline AxisView axis_view(const Shape& shape, int axis) {
  AxisView v{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) v.outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  return detail::make_result<Scalar>(a.shape(), a.data() + b.data(), {&a, &b},
                                     [a = a.node(), b = b.node()](const Array<Scalar>& g) {
                                       detail::accumulate(a, g);
                                       detail::accumulate(b, g);
                                     });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  return detail::make_result<Scalar>(a.shape(), a.data() - b.data(), {&a, &b},
                                     [a = a.node(), b = b.node()](const Array<Scalar>& g) {
                                       detail::accumulate(a, g);
                                       detail::accumulate(b, -g);
                                     });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "mul");
  return detail::make_result<Scalar>(a.shape(), a.data() * b.data(), {&a, &b},
                                     [a = a.node(), b = b.node()](const Array<Scalar>& g) {
                                       detail::accumulate(a, g * b->data);
                                       detail::accumulate(b, g * a->data);
                                     });
}

template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "div");
  return detail::make_result<Scalar>(a.shape(), a.data() / b.data(), {&a, &b},
                                     [a = a.node(), b = b.node()](const Array<Scalar>& g) {
                                       detail::accumulate(a, g / b->data);
                                       detail::accumulate(b, -g * a->data / b->data.square());
                                     });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar s) {
  return detail::make_result<Scalar>(a.shape(), a.data() + s, {&a},
                                     [a = a.node()](const Array<Scalar>& g) { detail::accumulate(a, g); });
}

template <typename Scalar>
Tensor<Scalar> mul_scalar(const Tensor<Scalar>& a, Scalar s) {
  return detail::make_result<Scalar>(a.shape(), a.data() * s, {&a},
                                     [a = a.node(), s](const Array<Scalar>& g) { detail::accumulate(a, g * s); });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Tensor<Scalar> operator/(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return div(a, b); }
template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, Scalar s) { return add_scalar(a, s); }
template <typename Scalar>
Tensor<Scalar> operator+(Scalar s, const Tensor<Scalar>& a) { return add_scalar(a, s); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, Scalar s) { return add_scalar(a, -s); }
template <typename Scalar>
Tensor<Scalar> operator-(Scalar s, const Tensor<Scalar>& a) { return add_scalar(mul_scalar(a, Scalar(-1)), s); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar s) { return mul_scalar(a, s); }
template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) { return mul_scalar(a, s); }
template <typename Scalar>
Tensor<Scalar> operator/(const Tensor<Scalar>& a, Scalar s) { return mul_scalar(a, Scalar(1) / s); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) { return mul_scalar(a, Scalar(-1)); }

// ---------------------------------------------------------------------------
// Elementwise functions

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& x) {
  return detail::make_result<Scalar>(x.shape(), x.data().square(), {&x},
                                     [x = x.node()](const Array<Scalar>& g) {
                                       detail::accumulate(x, Scalar(2) * g * x->data);
                                     });
}

template <typename Scalar>
Tensor<Scalar> sqrt(const Tensor<Scalar>& x) {
  Array<Scalar> y = x.data().sqrt();
  return detail::make_result<Scalar>(x.shape(), y, {&x}, [x = x.node(), y](const Array<Scalar>& g) {
    detail::accumulate(x, (y > Scalar(0)).select(g / (Scalar(2) * y), Scalar(0)));
  });
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& x) {
  Array<Scalar> y = x.data().exp();
  return detail::make_result<Scalar>(x.shape(), y, {&x},
                                     [x = x.node(), y](const Array<Scalar>& g) { detail::accumulate(x, g * y); });
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& x) {
  return detail::make_result<Scalar>(x.shape(), x.data().log(), {&x},
                                     [x = x.node()](const Array<Scalar>& g) { detail::accumulate(x, g / x->data); });
}

template <typename Scalar>
Tensor<Scalar> sin(const Tensor<Scalar>& x) {
  return detail::make_result<Scalar>(x.shape(), x.data().sin(), {&x},
                                     [x = x.node()](const Array<Scalar>& g) {
                                       detail::accumulate(x, g * x->data.cos());
                                     });
}

template <typename Scalar>
Tensor<Scalar> cos(const Tensor<Scalar>& x) {
  return detail::make_result<Scalar>(x.shape(), x.data().cos(), {&x},
                                     [x = x.node()](const Array<Scalar>& g) {
                                       detail::accumulate(x, -g * x->data.sin());
                                     });
}

template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& x) {
  return detail::make_result<Scalar>(x.shape(), x.data().abs(), {&x}, [x = x.node()](const Array<Scalar>& g) {
    detail::accumulate(x, g * x->data.sign());
  });
}

template <typename Scalar>
Tensor<Scalar> atan2(const Tensor<Scalar>& y, const Tensor<Scalar>& x) {
  detail::require_same_shape(y, x, "atan2");
  Array<Scalar> out(y.numel());
  for (Index i = 0; i < out.size(); ++i) out[i] = std::atan2(y.data()[i], x.data()[i]);
  return detail::make_result<Scalar>(y.shape(), std::move(out), {&y, &x},
                                     [y = y.node(), x = x.node()](const Array<Scalar>& g) {
                                       Array<Scalar> r2 = x->data.square() + y->data.square();
                                       Array<Scalar> inv = (r2 > Scalar(0)).select(r2.inverse(), Scalar(0));
                                       detail::accumulate(y, g * x->data * inv);
                                       detail::accumulate(x, -g * y->data * inv);
                                     });
}

// max(x, lo); the gradient passes only where x > lo.
template <typename Scalar>
Tensor<Scalar> clamp_min(const Tensor<Scalar>& x, Scalar lo) {
  return detail::make_result<Scalar>(x.shape(), x.data().max(lo), {&x}, [x = x.node(), lo](const Array<Scalar>& g) {
    detail::accumulate(x, (x->data > lo).select(g, Scalar(0)));
  });
}

template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& x, Scalar lo, Scalar hi) {
  return detail::make_result<Scalar>(x.shape(), x.data().max(lo).min(hi), {&x},
                                     [x = x.node(), lo, hi](const Array<Scalar>& g) {
                                       detail::accumulate(x, (x->data > lo && x->data < hi).select(g, Scalar(0)));
                                     });
}

enum class Activation { identity, elu, relu, leaky_relu, tanh, sigmoid, softplus };

inline constexpr double kLeakySlope = 0.2;

template <typename Scalar>
Tensor<Scalar> activation(const Tensor<Scalar>& x, Activation kind) {
  const Array<Scalar>& v = x.data();
  const Scalar slope = Scalar(kLeakySlope);
  Array<Scalar> y;
  switch (kind) {
    case Activation::identity: y = v; break;
    case Activation::elu: y = (v > Scalar(0)).select(v, v.exp() - Scalar(1)); break;
    case Activation::relu: y = v.max(Scalar(0)); break;
    case Activation::leaky_relu: y = (v > Scalar(0)).select(v, slope * v); break;
    case Activation::tanh: y = v.tanh(); break;
    case Activation::sigmoid: y = Scalar(1) / (Scalar(1) + (-v).exp()); break;
    case Activation::softplus: y = v.max(Scalar(0)) + (-v.abs()).exp().log1p(); break;
  }
  return detail::make_result<Scalar>(
      x.shape(), y, {&x}, [x = x.node(), y, kind, slope](const Array<Scalar>& g) {
        const Array<Scalar>& v = x->data;
        switch (kind) {
          case Activation::identity: detail::accumulate(x, g); break;
          case Activation::elu: detail::accumulate(x, (v > Scalar(0)).select(g, g * (y + Scalar(1)))); break;
          case Activation::relu: detail::accumulate(x, (v > Scalar(0)).select(g, Scalar(0))); break;
          case Activation::leaky_relu: detail::accumulate(x, (v > Scalar(0)).select(g, slope * g)); break;
          case Activation::tanh: detail::accumulate(x, g * (Scalar(1) - y.square())); break;
          case Activation::sigmoid: detail::accumulate(x, g * y * (Scalar(1) - y)); break;
          case Activation::softplus:
            detail::accumulate(x, g / (Scalar(1) + (-v).exp()));
            break;
        }
      });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) { return activation(x, Activation::relu); }
template <typename Scalar>
Tensor<Scalar> elu(const Tensor<Scalar>& x) { return activation(x, Activation::elu); }
template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x) { return activation(x, Activation::leaky_relu); }
template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) { return activation(x, Activation::tanh); }
template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) { return activation(x, Activation::sigmoid); }
template <typename Scalar>
Tensor<Scalar> softplus(const Tensor<Scalar>& x) { return activation(x, Activation::softplus); }

// ---------------------------------------------------------------------------
// Reductions

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  return detail::make_result<Scalar>(Shape{}, Array<Scalar>::Constant(1, x.data().sum()), {&x},
                                     [x = x.node()](const Array<Scalar>& g) {
                                       detail::accumulate(x, Array<Scalar>::Constant(x->data.size(), g[0]));
                                     });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  return mul_scalar(sum(x), Scalar(1) / Scalar(x.numel()));
}

// Reduces one axis; the result drops that axis.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x, int axis) {
  axis = detail::normalize_axis(axis, x.rank(), "sum");
  const auto v = detail::axis_view(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + axis);
  Array<Scalar> out = Array<Scalar>::Zero(v.outer * v.inner);
  for (Index o = 0; o < v.outer; ++o)
    for (Index k = 0; k < v.n; ++k)
      out.segment(o * v.inner, v.inner) += x.data().segment((o * v.n + k) * v.inner, v.inner);
  return detail::make_result<Scalar>(out_shape, std::move(out), {&x}, [x = x.node(), v](const Array<Scalar>& g) {
    if (!x->requires_grad) return;
    auto& gx = x->grad_buffer();
    for (Index o = 0; o < v.outer; ++o)
      for (Index k = 0; k < v.n; ++k) gx.segment((o * v.n + k) * v.inner, v.inner) += g.segment(o * v.inner, v.inner);
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x, int axis) {
  const Index n = x.dim(axis);
  return mul_scalar(sum(x, axis), Scalar(1) / Scalar(n));
}

template <typename Scalar>
Tensor<Scalar> l1_norm(const Tensor<Scalar>& x) {
  return sum(abs(x));
}

// Euclidean norm of all elements; gradient defined as 0 at the origin.
template <typename Scalar>
Tensor<Scalar> l2_norm(const Tensor<Scalar>& x) {
  const Scalar n = std::sqrt(x.data().square().sum());
  return detail::make_result<Scalar>(Shape{}, Array<Scalar>::Constant(1, n), {&x},
                                     [x = x.node(), n](const Array<Scalar>& g) {
                                       if (n > Scalar(0)) detail::accumulate(x, g[0] * x->data / n);
                                     });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, const Shape& shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape) + " changes element count");
  return detail::make_result<Scalar>(shape, x.data(), {&x},
                                     [x = x.node()](const Array<Scalar>& g) { detail::accumulate(x, g); });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x) {
  if (x.rank() != 2) throw ShapeError("transpose: rank 2 required, got " + to_string(x.shape()));
  const Index r = x.dim(0), c = x.dim(1);
  Array<Scalar> out(x.numel());
  Eigen::Map<RowMatrix<Scalar>>(out.data(), c, r) = x.matrix().transpose();
  return detail::make_result<Scalar>(Shape{c, r}, std::move(out), {&x}, [x = x.node(), r, c](const Array<Scalar>& g) {
    if (!x->requires_grad) return;
    Eigen::Map<RowMatrix<Scalar>>(x->grad_buffer().data(), r, c) +=
        Eigen::Map<const RowMatrix<Scalar>>(g.data(), c, r).transpose();
  });
}

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  axis = detail::normalize_axis(axis, parts.front().rank(), "concat");
  Shape out_shape = parts.front().shape();
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    if (p.rank() != parts.front().rank()) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < p.rank(); ++i)
      if (i != axis && p.dim(i) != parts.front().dim(i))
        throw ShapeError("concat: dimension " + std::to_string(i) + " differs");
    out_shape[static_cast<std::size_t>(axis)] += p.dim(axis);
  }
  const auto ov = detail::axis_view(out_shape, axis);
  Array<Scalar> out(numel(out_shape));
  std::vector<Index> offsets;
  Index offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const Index n = p.dim(axis);
    for (Index o = 0; o < ov.outer; ++o)
      out.segment((o * ov.n + offset) * ov.inner, n * ov.inner) = p.data().segment(o * n * ov.inner, n * ov.inner);
    offset += n;
  }
  auto out_t = Tensor<Scalar>(out_shape, std::move(out));
  auto& tape = Tape<Scalar>::active();
  bool any = false;
  std::vector<typename Tensor<Scalar>::NodePtr> nodes;
  for (const auto& p : parts) {
    any = any || p.requires_grad();
    nodes.push_back(p.node());
  }
  if (!any || !tape.recording()) return out_t;
  out_t.node()->requires_grad = true;
  tape.record(nodes, out_t.node(), [nodes, offsets, ov](const Array<Scalar>& g) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!nodes[i]->requires_grad) continue;
      const Index n = nodes[i]->data.size() / (ov.outer * ov.inner);
      auto& gp = nodes[i]->grad_buffer();
      for (Index o = 0; o < ov.outer; ++o)
        gp.segment(o * n * ov.inner, n * ov.inner) += g.segment((o * ov.n + offsets[i]) * ov.inner, n * ov.inner);
    }
  });
  return out_t;
}

template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, int axis, Index start, Index length) {
  axis = detail::normalize_axis(axis, x.rank(), "slice");
  if (start < 0 || length <= 0 || start + length > x.dim(axis))
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside dimension " + std::to_string(axis) + " of " + to_string(x.shape()));
  const auto v = detail::axis_view(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = length;
  Array<Scalar> out(numel(out_shape));
  for (Index o = 0; o < v.outer; ++o)
    out.segment(o * length * v.inner, length * v.inner) = x.data().segment((o * v.n + start) * v.inner, length * v.inner);
  return detail::make_result<Scalar>(out_shape, std::move(out), {&x},
                                     [x = x.node(), v, start, length](const Array<Scalar>& g) {
                                       if (!x->requires_grad) return;
                                       auto& gx = x->grad_buffer();
                                       for (Index o = 0; o < v.outer; ++o)
                                         gx.segment((o * v.n + start) * v.inner, length * v.inner) +=
                                             g.segment(o * length * v.inner, length * v.inner);
                                     });
}

// Zero padding along one axis.
template <typename Scalar>
Tensor<Scalar> pad(const Tensor<Scalar>& x, int axis, Index before, Index after) {
  axis = detail::normalize_axis(axis, x.rank(), "pad");
  if (before < 0 || after < 0) throw ShapeError("pad: negative padding");
  if (before == 0 && after == 0) return x;
  const auto v = detail::axis_view(x.shape(), axis);
  Shape out_shape = x.shape();
  const Index n_out = v.n + before + after;
  out_shape[static_cast<std::size_t>(axis)] = n_out;
  Array<Scalar> out = Array<Scalar>::Zero(numel(out_shape));
  for (Index o = 0; o < v.outer; ++o)
    out.segment((o * n_out + before) * v.inner, v.n * v.inner) = x.data().segment(o * v.n * v.inner, v.n * v.inner);
  return detail::make_result<Scalar>(out_shape, std::move(out), {&x},
                                     [x = x.node(), v, before, n_out](const Array<Scalar>& g) {
                                       if (!x->requires_grad) return;
                                       auto& gx = x->grad_buffer();
                                       for (Index o = 0; o < v.outer; ++o)
                                         gx.segment(o * v.n * v.inner, v.n * v.inner) +=
                                             g.segment((o * n_out + before) * v.inner, v.n * v.inner);
                                     });
}

// ---------------------------------------------------------------------------
// Linear algebra

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: rank 2 operands required");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimension " + std::to_string(a.dim(1)) + " vs " + std::to_string(b.dim(0)));
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Array<Scalar> out(m * n);
  Eigen::Map<RowMatrix<Scalar>>(out.data(), m, n).noalias() = a.matrix() * b.matrix();
  return detail::make_result<Scalar>(Shape{m, n}, std::move(out), {&a, &b},
                                     [a = a.node(), b = b.node(), m, k, n](const Array<Scalar>& g) {
                                       Eigen::Map<const RowMatrix<Scalar>> G(g.data(), m, n);
                                       if (a->requires_grad)
                                         Eigen::Map<RowMatrix<Scalar>>(a->grad_buffer().data(), m, k).noalias() +=
                                             G * Eigen::Map<const RowMatrix<Scalar>>(b->data.data(), k, n).transpose();
                                       if (b->requires_grad)
                                         Eigen::Map<RowMatrix<Scalar>>(b->grad_buffer().data(), k, n).noalias() +=
                                             Eigen::Map<const RowMatrix<Scalar>>(a->data.data(), m, k).transpose() * G;
                                     });
}

// Affine map over the trailing dimension: y = x W^T + b.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  if (weight.rank() != 2) throw ShapeError("linear: weight must be rank 2");
  const Index f_out = weight.dim(0), f_in = weight.dim(1);
  if (x.rank() < 1 || x.dim(-1) != f_in)
    throw ShapeError("linear: trailing dimension " + std::to_string(x.rank() ? x.dim(-1) : 0) + " != F_in " +
                     std::to_string(f_in));
  if (bias.numel() != f_out) throw ShapeError("linear: bias length != F_out");
  const Index rows = x.numel() / f_in;
  Shape out_shape = x.shape();
  out_shape.back() = f_out;
  Array<Scalar> out(rows * f_out);
  Eigen::Map<RowMatrix<Scalar>> Y(out.data(), rows, f_out);
  Eigen::Map<const RowMatrix<Scalar>> X(x.data().data(), rows, f_in);
  Eigen::Map<const RowMatrix<Scalar>> W(weight.data().data(), f_out, f_in);
  Y.noalias() = X * W.transpose();
  Y.rowwise() += bias.data().matrix().transpose();
  return detail::make_result<Scalar>(
      out_shape, std::move(out), {&x, &weight, &bias},
      [x = x.node(), w = weight.node(), b = bias.node(), rows, f_in, f_out](const Array<Scalar>& g) {
        Eigen::Map<const RowMatrix<Scalar>> G(g.data(), rows, f_out);
        Eigen::Map<const RowMatrix<Scalar>> X(x->data.data(), rows, f_in);
        Eigen::Map<const RowMatrix<Scalar>> W(w->data.data(), f_out, f_in);
        if (x->requires_grad) Eigen::Map<RowMatrix<Scalar>>(x->grad_buffer().data(), rows, f_in).noalias() += G * W;
        if (w->requires_grad)
          Eigen::Map<RowMatrix<Scalar>>(w->grad_buffer().data(), f_out, f_in).noalias() += G.transpose() * X;
        if (b->requires_grad) b->grad_buffer() += G.colwise().sum().transpose().array();
      });
}

// x: [C x ...], bias: [C]; adds bias[c] to every element of channel c.
template <typename Scalar>
Tensor<Scalar> add_channel_bias(const Tensor<Scalar>& x, const Tensor<Scalar>& bias) {
  const Index c = x.dim(0);
  if (bias.numel() != c)
    throw ShapeError("add_channel_bias: bias length " + std::to_string(bias.numel()) + " != channels " +
                     std::to_string(c));
  const Index inner = x.numel() / c;
  Array<Scalar> out = x.data();
  Eigen::Map<RowMatrix<Scalar>>(out.data(), c, inner).colwise() += bias.data().matrix();
  return detail::make_result<Scalar>(x.shape(), std::move(out), {&x, &bias},
                                     [x = x.node(), b = bias.node(), c, inner](const Array<Scalar>& g) {
                                       detail::accumulate(x, g);
                                       if (b->requires_grad)
                                         b->grad_buffer() +=
                                             Eigen::Map<const RowMatrix<Scalar>>(g.data(), c, inner).rowwise().sum().array();
                                     });
}

// ---------------------------------------------------------------------------
// Sequence ops

// Inclusive running sum along the last axis.
template <typename Scalar>
Tensor<Scalar> cumsum(const Tensor<Scalar>& x) {
  const Index n = x.dim(-1), rows = x.numel() / n;
  Array<Scalar> out(x.numel());
  for (Index r = 0; r < rows; ++r) {
    Scalar acc = 0;
    for (Index t = 0; t < n; ++t) out[r * n + t] = acc += x.data()[r * n + t];
  }
  return detail::make_result<Scalar>(x.shape(), std::move(out), {&x}, [x = x.node(), n, rows](const Array<Scalar>& g) {
    if (!x->requires_grad) return;
    auto& gx = x->grad_buffer();
    for (Index r = 0; r < rows; ++r) {
      Scalar acc = 0;
      for (Index t = n - 1; t >= 0; --t) gx[r * n + t] += acc += g[r * n + t];
    }
  });
}

// Reads signal [C x T] at real-valued positions [C x T_out] (clamped to
// [0, T-1]) by linear interpolation. Differentiable in both arguments.
template <typename Scalar>
Tensor<Scalar> interp_linear(const Tensor<Scalar>& signal, const Tensor<Scalar>& positions) {
  if (signal.rank() != 2 || positions.rank() != 2 || signal.dim(0) != positions.dim(0))
    throw ShapeError("interp_linear: signal " + to_string(signal.shape()) + " vs positions " +
                     to_string(positions.shape()));
  const Index c = signal.dim(0), t_in = signal.dim(1), t_out = positions.dim(1);
  Array<Scalar> out(c * t_out);
  const auto& s = signal.data();
  const auto& p = positions.data();
  for (Index ch = 0; ch < c; ++ch) {
    for (Index t = 0; t < t_out; ++t) {
      const Scalar q = std::clamp(p[ch * t_out + t], Scalar(0), Scalar(t_in - 1));
      const Index i0 = std::min<Index>(static_cast<Index>(std::floor(q)), std::max<Index>(t_in - 2, 0));
      const Scalar f = q - Scalar(i0);
      const Scalar a = s[ch * t_in + i0];
      const Scalar b = t_in > 1 ? s[ch * t_in + i0 + 1] : a;
      out[ch * t_out + t] = a + f * (b - a);
    }
  }
  return detail::make_result<Scalar>(
      positions.shape(), std::move(out), {&signal, &positions},
      [sig = signal.node(), pos = positions.node(), c, t_in, t_out](const Array<Scalar>& g) {
        const auto& s = sig->data;
        const auto& p = pos->data;
        for (Index ch = 0; ch < c; ++ch) {
          for (Index t = 0; t < t_out; ++t) {
            const Scalar raw = p[ch * t_out + t];
            const Scalar q = std::clamp(raw, Scalar(0), Scalar(t_in - 1));
            const Index i0 = std::min<Index>(static_cast<Index>(std::floor(q)), std::max<Index>(t_in - 2, 0));
            const Scalar f = q - Scalar(i0);
            const Scalar gv = g[ch * t_out + t];
            if (sig->requires_grad) {
              auto& gs = sig->grad_buffer();
              if (t_in > 1) {
                gs[ch * t_in + i0] += (Scalar(1) - f) * gv;
                gs[ch * t_in + i0 + 1] += f * gv;
              } else {
                gs[ch * t_in] += gv;
              }
            }
            if (pos->requires_grad && t_in > 1 && raw >= Scalar(0) && raw <= Scalar(t_in - 1))
              pos->grad_buffer()[ch * t_out + t] += gv * (s[ch * t_in + i0 + 1] - s[ch * t_in + i0]);
          }
        }
      });
}

// Linear resampling of x [C x L] to [C x out_len] along time, sample
// centers aligned.
template <typename Scalar>
Tensor<Scalar> upsample_linear(const Tensor<Scalar>& x, Index out_len) {
  if (x.rank() != 2) throw ShapeError("upsample_linear: rank 2 required");
  const Index c = x.dim(0), len = x.dim(1);
  if (len == out_len) return x;
  Array<Scalar> pos(c * out_len);
  const double ratio = double(len) / double(out_len);
  for (Index t = 0; t < out_len; ++t) {
    const double q = std::clamp((double(t) + 0.5) * ratio - 0.5, 0.0, double(len - 1));
    for (Index ch = 0; ch < c; ++ch) pos[ch * out_len + t] = Scalar(q);
  }
  return interp_linear(x, Tensor<Scalar>({c, out_len}, std::move(pos)));
}

// Forward value of `quantized`, gradient routed to `z` as if identity.
template <typename Scalar>
Tensor<Scalar> straight_through(const Tensor<Scalar>& z, const Tensor<Scalar>& quantized) {
  detail::require_same_shape(z, quantized, "straight_through");
  return detail::make_result<Scalar>(z.shape(), quantized.data(), {&z},
                                     [z = z.node()](const Array<Scalar>& g) { detail::accumulate(z, g); });
}

}  // namespace bnc
