#include "rp2/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rp2/error.hpp"

namespace rp2::nn {
namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_string(t.shape()));
  }
}

void check_conv_operands(const Tensor& input, const Tensor& kernels, int stride) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  if (input.dim(3) != kernels.dim(2)) {
    throw ShapeError("conv2d: channel axis mismatch, input Cin=" + std::to_string(input.dim(3)) +
                     " but kernels Cin=" + std::to_string(kernels.dim(2)));
  }
  if (stride < 1) throw ValidationError("conv2d: stride must be >= 1");
}

}  // namespace

ConvGeometry conv_geometry(int in_h, int in_w, int kh, int kw, int stride, Padding padding) {
  ConvGeometry g;
  if (padding == Padding::valid) {
    if (in_h < kh) throw ShapeError("conv2d: height axis smaller than kernel");
    if (in_w < kw) throw ShapeError("conv2d: width axis smaller than kernel");
    g.out_h = (in_h - kh) / stride + 1;
    g.out_w = (in_w - kw) / stride + 1;
    return g;
  }
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const int pad_h = std::max((g.out_h - 1) * stride + kh - in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + kw - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, Padding padding) {
  check_conv_operands(input, kernels, stride);
  const int n = input.dim(0), h = input.dim(1), w = input.dim(2), cin = input.dim(3);
  const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
  const ConvGeometry g = conv_geometry(h, w, kh, kw, stride, padding);

  Tensor out({n, g.out_h, g.out_w, cout});
  const float* in = input.data();
  const float* k = kernels.data();
  float* o = out.data();
  for (int b = 0; b < n; ++b) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        float* dst = o + ((static_cast<std::size_t>(b) * g.out_h + oy) * g.out_w + ox) * cout;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride + ky - g.pad_top;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride + kx - g.pad_left;
            if (ix < 0 || ix >= w) continue;
            const float* src = in + ((static_cast<std::size_t>(b) * h + iy) * w + ix) * cin;
            const float* kk = k + (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
              const float v = src[ci];
              const float* krow = kk + static_cast<std::size_t>(ci) * cout;
              for (int co = 0; co < cout; ++co) dst[co] += v * krow[co];
            }
          }
        }
      }
    }
  }
  return out;
}

namespace {

void check_upstream(const Tensor& input, const Tensor& kernels, const Tensor& upstream, int stride, Padding padding,
                    ConvGeometry& g) {
  check_conv_operands(input, kernels, stride);
  g = conv_geometry(input.dim(1), input.dim(2), kernels.dim(0), kernels.dim(1), stride, padding);
  require_shape(upstream, {input.dim(0), g.out_h, g.out_w, kernels.dim(3)}, "conv2d_backward upstream");
}

Tensor conv_input_grad(const Tensor& input, const Tensor& kernels, const Tensor& upstream, int stride,
                       const ConvGeometry& g) {
  const int n = input.dim(0), h = input.dim(1), w = input.dim(2), cin = input.dim(3);
  const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);

  // Kernels transposed to [Kh, Kw, Cout, Cin] so the inner loop runs over contiguous Cin.
  std::vector<float> kt(kernels.size());
  for (int ky = 0; ky < kh; ++ky)
    for (int kx = 0; kx < kw; ++kx)
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co)
          kt[((static_cast<std::size_t>(ky) * kw + kx) * cout + co) * cin + ci] =
              kernels[((static_cast<std::size_t>(ky) * kw + kx) * cin + ci) * cout + co];

  Tensor grad(input.shape());
  float* gi = grad.data();
  const float* up = upstream.data();
  for (int b = 0; b < n; ++b) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const float* u = up + ((static_cast<std::size_t>(b) * g.out_h + oy) * g.out_w + ox) * cout;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride + ky - g.pad_top;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride + kx - g.pad_left;
            if (ix < 0 || ix >= w) continue;
            float* dst = gi + ((static_cast<std::size_t>(b) * h + iy) * w + ix) * cin;
            const float* kk = kt.data() + (static_cast<std::size_t>(ky) * kw + kx) * cout * cin;
            for (int co = 0; co < cout; ++co) {
              const float uv = u[co];
              if (uv == 0.0f) continue;
              const float* krow = kk + static_cast<std::size_t>(co) * cin;
              for (int ci = 0; ci < cin; ++ci) dst[ci] += uv * krow[ci];
            }
          }
        }
      }
    }
  }
  return grad;
}

}  // namespace

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& upstream, int stride,
                          Padding padding) {
  ConvGeometry g;
  check_upstream(input, kernels, upstream, stride, padding, g);
  const int n = input.dim(0), h = input.dim(1), w = input.dim(2), cin = input.dim(3);
  const int kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);

  ConvGrads grads{conv_input_grad(input, kernels, upstream, stride, g), Tensor(kernels.shape())};
  float* gk = grads.kernels.data();
  const float* in = input.data();
  const float* up = upstream.data();
  for (int b = 0; b < n; ++b) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const float* u = up + ((static_cast<std::size_t>(b) * g.out_h + oy) * g.out_w + ox) * cout;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride + ky - g.pad_top;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride + kx - g.pad_left;
            if (ix < 0 || ix >= w) continue;
            const float* src = in + ((static_cast<std::size_t>(b) * h + iy) * w + ix) * cin;
            float* kk = gk + (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
            for (int ci = 0; ci < cin; ++ci) {
              const float v = src[ci];
              if (v == 0.0f) continue;
              float* krow = kk + static_cast<std::size_t>(ci) * cout;
              for (int co = 0; co < cout; ++co) krow[co] += v * u[co];
            }
          }
        }
      }
    }
  }
  return grads;
}

Tensor conv2d_backward_input(const Tensor& input_shape_ref, const Tensor& kernels, const Tensor& upstream, int stride,
                             Padding padding) {
  ConvGeometry g;
  check_upstream(input_shape_ref, kernels, upstream, stride, padding, g);
  return conv_input_grad(input_shape_ref, kernels, upstream, stride, g);
}

Tensor bias_add(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "bias");
  const int c = x.dim(-1);
  if (bias.dim(0) != c) {
    throw ShapeError("bias_add: channel axis mismatch, x has " + std::to_string(c) + ", bias has " +
                     std::to_string(bias.dim(0)));
  }
  Tensor out = x;
  float* o = out.data();
  const std::size_t rows = x.size() / static_cast<std::size_t>(c);
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) o[r * c + j] += bias[j];
  return out;
}

Tensor bias_add_backward(const Tensor& upstream) {
  const int c = upstream.dim(-1);
  Tensor g({c});
  const std::size_t rows = upstream.size() / static_cast<std::size_t>(c);
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) g[j] += upstream[r * c + j];
  return g;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.values()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  require_shape(upstream, input.shape(), "relu_backward upstream");
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > 0.0f ? upstream[i] : 0.0f;
  return g;
}

namespace {

void check_pool_input(const Tensor& x) {
  require_rank(x, 4, "maxpool2 input");
  if (x.dim(1) % 2 != 0) throw ShapeError("maxpool2: height axis must be even, got " + std::to_string(x.dim(1)));
  if (x.dim(2) % 2 != 0) throw ShapeError("maxpool2: width axis must be even, got " + std::to_string(x.dim(2)));
}

// Flat offset of the first maximum in the 2x2 window at pooled (b, py, px, c).
std::size_t window_argmax(const Tensor& x, int b, int py, int px, int ch) {
  const int h = x.dim(1), w = x.dim(2), c = x.dim(3);
  std::size_t best = 0;
  float best_v = 0.0f;
  bool first = true;
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const std::size_t off =
          ((static_cast<std::size_t>(b) * h + 2 * py + dy) * w + 2 * px + dx) * c + static_cast<std::size_t>(ch);
      if (first || x[off] > best_v) {
        best = off;
        best_v = x[off];
        first = false;
      }
    }
  }
  return best;
}

}  // namespace

Tensor maxpool2(const Tensor& x) {
  check_pool_input(x);
  const int n = x.dim(0), ph = x.dim(1) / 2, pw = x.dim(2) / 2, c = x.dim(3);
  Tensor out({n, ph, pw, c});
  std::size_t o = 0;
  for (int b = 0; b < n; ++b)
    for (int py = 0; py < ph; ++py)
      for (int px = 0; px < pw; ++px)
        for (int ch = 0; ch < c; ++ch) out[o++] = x[window_argmax(x, b, py, px, ch)];
  return out;
}

Tensor maxpool2_backward(const Tensor& input, const Tensor& upstream) {
  check_pool_input(input);
  const int n = input.dim(0), ph = input.dim(1) / 2, pw = input.dim(2) / 2, c = input.dim(3);
  require_shape(upstream, {n, ph, pw, c}, "maxpool2_backward upstream");
  Tensor g(input.shape());
  std::size_t o = 0;
  for (int b = 0; b < n; ++b)
    for (int py = 0; py < ph; ++py)
      for (int px = 0; px < pw; ++px)
        for (int ch = 0; ch < c; ++ch) g[window_argmax(input, b, py, px, ch)] += upstream[o++];
  return g;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  const int n = input.dim(0), d = input.dim(1), k = weights.dim(1);
  if (weights.dim(0) != d) {
    throw ShapeError("dense: feature axis mismatch, input D=" + std::to_string(d) + " but weights D=" +
                     std::to_string(weights.dim(0)));
  }
  require_shape(bias, {k}, "dense bias");
  Tensor out({n, k});
  for (int r = 0; r < n; ++r) {
    float* o = out.data() + static_cast<std::size_t>(r) * k;
    for (int j = 0; j < k; ++j) o[j] = bias[j];
    for (int i = 0; i < d; ++i) {
      const float v = input[static_cast<std::size_t>(r) * d + i];
      const float* wrow = weights.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < k; ++j) o[j] += v * wrow[j];
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
  require_rank(input, 2, "dense input");
  const int n = input.dim(0), d = input.dim(1), k = weights.dim(1);
  require_shape(weights, {d, k}, "dense_backward weights");
  require_shape(upstream, {n, k}, "dense_backward upstream");
  DenseGrads g{Tensor({n, d}), Tensor({d, k}), bias_add_backward(upstream)};
  for (int r = 0; r < n; ++r) {
    const float* u = upstream.data() + static_cast<std::size_t>(r) * k;
    for (int i = 0; i < d; ++i) {
      const float* wrow = weights.data() + static_cast<std::size_t>(i) * k;
      const float v = input[static_cast<std::size_t>(r) * d + i];
      float* gw = g.weights.data() + static_cast<std::size_t>(i) * k;
      float acc = 0.0f;
      for (int j = 0; j < k; ++j) {
        acc += u[j] * wrow[j];
        gw[j] += v * u[j];
      }
      g.input[static_cast<std::size_t>(r) * d + i] = acc;
    }
  }
  return g;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax logits");
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape());
  for (int r = 0; r < n; ++r) {
    const float* z = logits.data() + static_cast<std::size_t>(r) * k;
    float* out = p.data() + static_cast<std::size_t>(r) * k;
    const float m = *std::max_element(z, z + k);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j]) - m);
    for (int j = 0; j < k; ++j) out[j] = static_cast<float>(std::exp(static_cast<double>(z[j]) - m) / sum);
  }
  return p;
}

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> targets) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const int n = logits.dim(0), k = logits.dim(1);
  if (targets.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("softmax_cross_entropy: batch axis has " + std::to_string(n) + " rows but " +
                     std::to_string(targets.size()) + " targets");
  }
  LossAndGrad out{0.0f, Tensor(logits.shape())};
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= k) {
      throw ValidationError("softmax_cross_entropy: target " + std::to_string(t) + " out of range [0," +
                            std::to_string(k) + ")");
    }
    const float* z = logits.data() + static_cast<std::size_t>(r) * k;
    float* g = out.grad.data() + static_cast<std::size_t>(r) * k;
    const double m = *std::max_element(z, z + k);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(z[j] - m);
    const double log_sum = std::log(sum);
    total += -(z[t] - m - log_sum);
    for (int j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - m - log_sum);
      g[j] = static_cast<float>((p - (j == t ? 1.0 : 0.0)) / n);
    }
  }
  out.loss = static_cast<float>(total / n);
  if (!std::isfinite(out.loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
  return out;
}

}  // namespace rp2::nn
