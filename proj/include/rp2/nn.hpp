#pragma once

#include <span>

#include "rp2/tensor.hpp"

/// Differentiable building blocks with explicit forward/backward pairs.
/// Activations are NHWC; conv kernels are [Kh, Kw, Cin, Cout]; dense weights [D, K].
namespace rp2::nn {

enum class Padding { valid, same };

struct ConvGeometry {
  int out_h = 0, out_w = 0;
  int pad_top = 0, pad_left = 0;
};

/// Output size and leading padding for a conv. "same" splits the total
/// padding with the smaller half first.
ConvGeometry conv_geometry(int in_h, int in_w, int kh, int kw, int stride, Padding padding);

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, Padding padding);

struct ConvGrads {
  Tensor input;
  Tensor kernels;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& upstream, int stride,
                          Padding padding);

/// Only the input gradient; skips the kernel accumulation.
Tensor conv2d_backward_input(const Tensor& input_shape_ref, const Tensor& kernels, const Tensor& upstream, int stride,
                             Padding padding);

/// Adds bias[c] along the last axis.
Tensor bias_add(const Tensor& x, const Tensor& bias);
/// Sum of upstream over every axis but the last.
Tensor bias_add_backward(const Tensor& upstream);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

/// 2x2 non-overlapping max pooling; H and W must be even.
Tensor maxpool2(const Tensor& x);
/// Routes each upstream value to its window's first maximum in row-major order.
Tensor maxpool2_backward(const Tensor& input, const Tensor& upstream);

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);

Tensor softmax(const Tensor& logits);

struct LossAndGrad {
  float loss = 0.0f;
  Tensor grad;
};

/// Mean over rows of -log softmax(logits)[target]; grad = (softmax - onehot) / N.
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> targets);

}  // namespace rp2::nn
