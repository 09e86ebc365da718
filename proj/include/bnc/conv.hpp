#pragma once

// Convolutions lowered to GEMM via im2col.

#include <string>

#include "bnc/tensor.hpp"

namespace bnc {

struct Conv1dOptions {
  Index stride = 1;
  Index dilation = 1;
  Index padding = 0;
  Index groups = 1;
};

namespace detail {

// cols[(ci*K + k), t] = x[ci, t*stride + k*dilation - padding] (0 outside).
template <typename Scalar>
void im2col_1d(const Scalar* x, Index c_in, Index t_in, Index k_len, Index t_out, const Conv1dOptions& o,
               Scalar* cols) {
  for (Index ci = 0; ci < c_in; ++ci)
    for (Index k = 0; k < k_len; ++k) {
      Scalar* row = cols + (ci * k_len + k) * t_out;
      const Scalar* xr = x + ci * t_in;
      const Index off = k * o.dilation - o.padding;
      for (Index t = 0; t < t_out; ++t) {
        const Index src = t * o.stride + off;
        row[t] = (src >= 0 && src < t_in) ? xr[src] : Scalar(0);
      }
    }
}

template <typename Scalar>
void col2im_1d(const Scalar* cols, Index c_in, Index t_in, Index k_len, Index t_out, const Conv1dOptions& o,
               Scalar* x) {
  for (Index ci = 0; ci < c_in; ++ci)
    for (Index k = 0; k < k_len; ++k) {
      const Scalar* row = cols + (ci * k_len + k) * t_out;
      Scalar* xr = x + ci * t_in;
      const Index off = k * o.dilation - o.padding;
      for (Index t = 0; t < t_out; ++t) {
        const Index src = t * o.stride + off;
        if (src >= 0 && src < t_in) xr[src] += row[t];
      }
    }
}

}  // namespace detail

// input [C_in x T], kernel [C_out x C_in/groups x K], bias [C_out].
template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias,
                      const Conv1dOptions& opt = {}) {
  if (input.rank() != 2) throw ShapeError("conv1d: input must be [C_in x T], got " + to_string(input.shape()));
  if (kernel.rank() != 3) throw ShapeError("conv1d: kernel must be [C_out x C_in x K], got " + to_string(kernel.shape()));
  if (opt.stride < 1 || opt.dilation < 1 || opt.padding < 0 || opt.groups < 1)
    throw ShapeError("conv1d: stride and dilation must be >= 1");
  const Index c_in = input.dim(0), t_in = input.dim(1);
  const Index c_out = kernel.dim(0), k_len = kernel.dim(2), g = opt.groups;
  if (c_in % g != 0 || c_out % g != 0) throw ShapeError("conv1d: channels not divisible by groups");
  const Index cg_in = c_in / g, cg_out = c_out / g;
  if (kernel.dim(1) != cg_in)
    throw ShapeError("conv1d: input channel dimension " + std::to_string(c_in) + " does not match kernel dimension 1 (" +
                     std::to_string(kernel.dim(1)) + " per group)");
  if (bias.numel() != c_out)
    throw ShapeError("conv1d: bias length " + std::to_string(bias.numel()) + " != C_out " + std::to_string(c_out));
  const Index span = opt.dilation * (k_len - 1) + 1;
  if (t_in + 2 * opt.padding < span)
    throw ShapeError("conv1d: time dimension " + std::to_string(t_in) + " shorter than kernel span " +
                     std::to_string(span));
  const Index t_out = (t_in + 2 * opt.padding - span) / opt.stride + 1;
  const Index rows = cg_in * k_len;

  Array<Scalar> cols(g * rows * t_out);
  Array<Scalar> out(c_out * t_out);
  for (Index gi = 0; gi < g; ++gi) {
    detail::im2col_1d(input.data().data() + gi * cg_in * t_in, cg_in, t_in, k_len, t_out, opt,
                      cols.data() + gi * rows * t_out);
    Eigen::Map<RowMatrix<Scalar>> Y(out.data() + gi * cg_out * t_out, cg_out, t_out);
    Eigen::Map<const RowMatrix<Scalar>> W(kernel.data().data() + gi * cg_out * rows, cg_out, rows);
    Eigen::Map<const RowMatrix<Scalar>> X(cols.data() + gi * rows * t_out, rows, t_out);
    Y.noalias() = W * X;
  }
  Eigen::Map<RowMatrix<Scalar>>(out.data(), c_out, t_out).colwise() += bias.data().matrix();

  return detail::make_result<Scalar>(
      Shape{c_out, t_out}, std::move(out), {&input, &kernel, &bias},
      [x = input.node(), w = kernel.node(), b = bias.node(), cols = std::move(cols), opt, g, cg_in, cg_out, t_in,
       k_len, t_out, rows](const Array<Scalar>& grad) {
        for (Index gi = 0; gi < g; ++gi) {
          Eigen::Map<const RowMatrix<Scalar>> G(grad.data() + gi * cg_out * t_out, cg_out, t_out);
          if (w->requires_grad) {
            Eigen::Map<const RowMatrix<Scalar>> X(cols.data() + gi * rows * t_out, rows, t_out);
            Eigen::Map<RowMatrix<Scalar>>(w->grad_buffer().data() + gi * cg_out * rows, cg_out, rows).noalias() +=
                G * X.transpose();
          }
          if (x->requires_grad) {
            Eigen::Map<const RowMatrix<Scalar>> W(w->data.data() + gi * cg_out * rows, cg_out, rows);
            RowMatrix<Scalar> dcols = W.transpose() * G;
            detail::col2im_1d(dcols.data(), cg_in, t_in, k_len, t_out, opt,
                              x->grad_buffer().data() + gi * cg_in * t_in);
          }
        }
        if (b->requires_grad)
          b->grad_buffer() += Eigen::Map<const RowMatrix<Scalar>>(grad.data(), g * cg_out, t_out).rowwise().sum().array();
      });
}

// input [C_in x T], kernel [C_in x C_out x K] with K >= stride. The raw
// transposed convolution has length (T-1)*stride + K; it is cropped
// symmetrically to exactly T*stride.
template <typename Scalar>
Tensor<Scalar> conv1d_transpose(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias,
                                Index stride) {
  if (input.rank() != 2) throw ShapeError("conv1d_transpose: input must be [C_in x T]");
  if (kernel.rank() != 3) throw ShapeError("conv1d_transpose: kernel must be [C_in x C_out x K]");
  if (stride < 1) throw ShapeError("conv1d_transpose: stride must be >= 1");
  const Index c_in = input.dim(0), t_in = input.dim(1);
  if (kernel.dim(0) != c_in)
    throw ShapeError("conv1d_transpose: input channel dimension " + std::to_string(c_in) + " != kernel dimension 0 (" +
                     std::to_string(kernel.dim(0)) + ")");
  const Index c_out = kernel.dim(1), k_len = kernel.dim(2);
  if (k_len < stride) throw ShapeError("conv1d_transpose: kernel length shorter than stride");
  if (bias.numel() != c_out) throw ShapeError("conv1d_transpose: bias length != C_out");
  const Index t_out = t_in * stride;
  const Index crop = (k_len - stride) / 2;
  const Index rows = c_out * k_len;

  // cols = W^T x : [C_out*K x T_in]; scatter cols[(co,k), t] -> out[co, t*stride + k - crop].
  Eigen::Map<const RowMatrix<Scalar>> W(kernel.data().data(), c_in, rows);
  Eigen::Map<const RowMatrix<Scalar>> X(input.data().data(), c_in, t_in);
  RowMatrix<Scalar> cols = W.transpose() * X;
  Array<Scalar> out = Array<Scalar>::Zero(c_out * t_out);
  for (Index co = 0; co < c_out; ++co)
    for (Index k = 0; k < k_len; ++k) {
      const Scalar* row = cols.data() + (co * k_len + k) * t_in;
      for (Index t = 0; t < t_in; ++t) {
        const Index dst = t * stride + k - crop;
        if (dst >= 0 && dst < t_out) out[co * t_out + dst] += row[t];
      }
    }
  Eigen::Map<RowMatrix<Scalar>>(out.data(), c_out, t_out).colwise() += bias.data().matrix();

  return detail::make_result<Scalar>(
      Shape{c_out, t_out}, std::move(out), {&input, &kernel, &bias},
      [x = input.node(), w = kernel.node(), b = bias.node(), c_in, c_out, k_len, t_in, t_out, stride, crop,
       rows](const Array<Scalar>& grad) {
        RowMatrix<Scalar> dcols(rows, t_in);
        for (Index co = 0; co < c_out; ++co)
          for (Index k = 0; k < k_len; ++k) {
            Scalar* row = dcols.data() + (co * k_len + k) * t_in;
            for (Index t = 0; t < t_in; ++t) {
              const Index dst = t * stride + k - crop;
              row[t] = (dst >= 0 && dst < t_out) ? grad[co * t_out + dst] : Scalar(0);
            }
          }
        Eigen::Map<const RowMatrix<Scalar>> W(w->data.data(), c_in, rows);
        Eigen::Map<const RowMatrix<Scalar>> X(x->data.data(), c_in, t_in);
        if (x->requires_grad) Eigen::Map<RowMatrix<Scalar>>(x->grad_buffer().data(), c_in, t_in).noalias() += W * dcols;
        if (w->requires_grad)
          Eigen::Map<RowMatrix<Scalar>>(w->grad_buffer().data(), c_in, rows).noalias() += X * dcols.transpose();
        if (b->requires_grad)
          b->grad_buffer() += Eigen::Map<const RowMatrix<Scalar>>(grad.data(), c_out, t_out).rowwise().sum().array();
      });
}

struct Conv2dOptions {
  Index stride_h = 1, stride_w = 1;
  Index pad_h = 0, pad_w = 0;
};

// input [C_in x H x W], kernel [C_out x C_in x KH x KW], bias [C_out].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias,
                      const Conv2dOptions& opt = {}) {
  if (input.rank() != 3) throw ShapeError("conv2d: input must be [C x H x W], got " + to_string(input.shape()));
  if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be rank 4");
  const Index c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const Index c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c_in)
    throw ShapeError("conv2d: input channel dimension " + std::to_string(c_in) + " != kernel dimension 1 (" +
                     std::to_string(kernel.dim(1)) + ")");
  if (bias.numel() != c_out) throw ShapeError("conv2d: bias length != C_out");
  if (h + 2 * opt.pad_h < kh || w + 2 * opt.pad_w < kw) throw ShapeError("conv2d: input smaller than kernel");
  const Index h_out = (h + 2 * opt.pad_h - kh) / opt.stride_h + 1;
  const Index w_out = (w + 2 * opt.pad_w - kw) / opt.stride_w + 1;
  const Index rows = c_in * kh * kw, cols_n = h_out * w_out;

  auto for_each_tap = [=](auto&& fn) {
    for (Index ci = 0; ci < c_in; ++ci)
      for (Index a = 0; a < kh; ++a)
        for (Index bb = 0; bb < kw; ++bb) {
          const Index r = (ci * kh + a) * kw + bb;
          for (Index i = 0; i < h_out; ++i) {
            const Index y = i * opt.stride_h + a - opt.pad_h;
            for (Index j = 0; j < w_out; ++j) {
              const Index xx = j * opt.stride_w + bb - opt.pad_w;
              const bool inside = y >= 0 && y < h && xx >= 0 && xx < w;
              fn(r * cols_n + i * w_out + j, inside ? (ci * h + y) * w + xx : Index(-1));
            }
          }
        }
  };

  RowMatrix<Scalar> cols(rows, cols_n);
  const Scalar* xd = input.data().data();
  for_each_tap([&](Index dst, Index src) { cols.data()[dst] = src >= 0 ? xd[src] : Scalar(0); });
  Array<Scalar> out(c_out * cols_n);
  Eigen::Map<RowMatrix<Scalar>> Y(out.data(), c_out, cols_n);
  Y.noalias() = Eigen::Map<const RowMatrix<Scalar>>(kernel.data().data(), c_out, rows) * cols;
  Y.colwise() += bias.data().matrix();

  return detail::make_result<Scalar>(
      Shape{c_out, h_out, w_out}, std::move(out), {&input, &kernel, &bias},
      [x = input.node(), k = kernel.node(), b = bias.node(), cols = std::move(cols), for_each_tap, c_out, rows,
       cols_n](const Array<Scalar>& grad) {
        Eigen::Map<const RowMatrix<Scalar>> G(grad.data(), c_out, cols_n);
        if (k->requires_grad)
          Eigen::Map<RowMatrix<Scalar>>(k->grad_buffer().data(), c_out, rows).noalias() += G * cols.transpose();
        if (x->requires_grad) {
          RowMatrix<Scalar> dcols = Eigen::Map<const RowMatrix<Scalar>>(k->data.data(), c_out, rows).transpose() * G;
          Scalar* gx = x->grad_buffer().data();
          for_each_tap([&](Index d, Index src) {
            if (src >= 0) gx[src] += dcols.data()[d];
          });
        }
        if (b->requires_grad) b->grad_buffer() += G.rowwise().sum().array();
      });
}

}  // namespace bnc
