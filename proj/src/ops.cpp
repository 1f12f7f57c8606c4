#include "prunekit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gemm.hpp"
#include "prunekit/errors.hpp"
#include "prunekit/parallel.hpp"

namespace prunekit::ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must be " + std::to_string(rank) +
                     "-D, got " + shape_to_string(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const char* detail, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": " + detail + " (input " + shape_to_string(a) +
                   ", weight " + shape_to_string(b) + ")");
}

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w, out_c, k, stride, pad, out_h, out_w;
  std::size_t col_rows() const { return in_c * k * k; }
  std::size_t col_cols() const { return out_h * out_w; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weight, std::size_t stride,
                           std::size_t padding, const char* op) {
  require_rank(input, 4, op, "input");
  require_rank(weight, 4, op, "weight");
  if (weight.dim(2) != weight.dim(3)) mismatch(op, "kernel must be square", input.shape(), weight.shape());
  if (stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (weight.dim(2) < 1) throw ShapeError(std::string(op) + ": kernel size must be >= 1");
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_c = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_c = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  g.out_h = conv_out_dim(g.in_h, g.k, stride, padding);
  g.out_w = conv_out_dim(g.in_w, g.k, stride, padding);
  return g;
}

void im2col(const float* in, const ConvGeometry& g, float* col) {
  const std::size_t hw = g.col_cols();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    const float* plane = in + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        float* row = col + ((c * g.k + ki) * g.k + kj) * hw;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          float* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(ih) * g.in_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.in_w)) ? 0.0f
                                                                  : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

void col2im(const float* col, const ConvGeometry& g, float* in) {
  const std::size_t hw = g.col_cols();
  std::fill(in, in + g.in_c * g.in_h * g.in_w, 0.0f);
  for (std::size_t c = 0; c < g.in_c; ++c) {
    float* plane = in + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const float* row = col + ((c * g.k + ki) * g.k + kj) * hw;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
          float* dst = plane + static_cast<std::size_t>(ih) * g.in_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw < 0 || iw >= static_cast<long>(g.in_w)) continue;
            dst[static_cast<std::size_t>(iw)] += row[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

void check_bias(const Tensor* bias, std::size_t n, const char* op) {
  if (bias && (bias->rank() != 1 || bias->dim(0) != n)) {
    throw ShapeError(std::string(op) + ": bias shape " + shape_to_string(bias->shape()) +
                     " does not match " + std::to_string(n) + " outputs");
  }
}

}  // namespace

std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride,
                         std::size_t padding) {
  if (stride < 1) throw ShapeError("convolution stride must be >= 1");
  if (in + 2 * padding < kernel) {
    throw ShapeError("convolution window " + std::to_string(kernel) +
                     " larger than padded input " + std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, weight, stride, padding, "conv2d");
  if (weight.dim(1) != g.in_c) {
    mismatch("conv2d", "input channel count differs from weight C_in", input.shape(),
             weight.shape());
  }
  check_bias(bias, g.out_c, "conv2d");
  Tensor out({g.batch, g.out_c, g.out_h, g.out_w});
  const std::size_t hw = g.col_cols();
  const std::size_t kk = g.col_rows();
  std::vector<float> col(g.is_pointwise() ? 0 : kk * hw);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const float* in_b = input.ptr() + b * g.in_c * g.in_h * g.in_w;
    const float* cols = in_b;
    if (!g.is_pointwise()) {
      im2col(in_b, g, col.data());
      cols = col.data();
    }
    float* out_b = out.ptr() + b * g.out_c * hw;
    detail::gemm_nn(g.out_c, hw, kk, weight.ptr(), cols, out_b, false);
    if (bias) {
      for (std::size_t co = 0; co < g.out_c; ++co) {
        const float bv = (*bias)[co];
        float* row = out_b + co * hw;
        for (std::size_t j = 0; j < hw; ++j) row[j] += bv;
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                          std::size_t stride, std::size_t padding, const Tensor& grad_output) {
  const ConvGeometry g = conv_geometry(input, weight, stride, padding, "conv2d_backward");
  if (weight.dim(1) != g.in_c) {
    mismatch("conv2d_backward", "input channel count differs from weight C_in", input.shape(),
             weight.shape());
  }
  const Shape expected{g.batch, g.out_c, g.out_h, g.out_w};
  if (grad_output.shape() != expected) {
    throw ShapeError("conv2d_backward: grad_output " + shape_to_string(grad_output.shape()) +
                     " expected " + shape_to_string(expected));
  }
  ConvGrads grads{Tensor(input.shape()), Tensor(weight.shape()),
                  has_bias ? Tensor({g.out_c}) : Tensor()};
  const std::size_t hw = g.col_cols();
  const std::size_t kk = g.col_rows();
  std::vector<float> col(g.is_pointwise() ? 0 : kk * hw);
  std::vector<float> grad_col(g.is_pointwise() ? 0 : kk * hw);
  for (std::size_t b = 0; b < g.batch; ++b) {
    const std::size_t in_off = b * g.in_c * g.in_h * g.in_w;
    const float* in_b = input.ptr() + in_off;
    const float* gout_b = grad_output.ptr() + b * g.out_c * hw;
    const float* cols = in_b;
    if (!g.is_pointwise()) {
      im2col(in_b, g, col.data());
      cols = col.data();
    }
    detail::gemm_nt(g.out_c, kk, hw, gout_b, cols, grads.weight.ptr(), true);
    if (g.is_pointwise()) {
      detail::gemm_tn(kk, hw, g.out_c, weight.ptr(), gout_b, grads.input.ptr() + in_off, false);
    } else {
      detail::gemm_tn(kk, hw, g.out_c, weight.ptr(), gout_b, grad_col.data(), false);
      col2im(grad_col.data(), g, grads.input.ptr() + in_off);
    }
    if (has_bias) {
      for (std::size_t co = 0; co < g.out_c; ++co) {
        float s = 0.0f;
        const float* row = gout_b + co * hw;
        for (std::size_t j = 0; j < hw; ++j) s += row[j];
        grads.bias[co] += s;
      }
    }
  }
  return grads;
}

Tensor depthwise_conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                                std::size_t stride, std::size_t padding) {
  const ConvGeometry g = conv_geometry(input, weight, stride, padding, "depthwise_conv2d");
  if (weight.dim(0) != g.in_c || weight.dim(1) != 1) {
    mismatch("depthwise_conv2d", "weight must be (C, 1, k, k) with C equal to input channels",
             input.shape(), weight.shape());
  }
  check_bias(bias, g.in_c, "depthwise_conv2d");
  Tensor out({g.batch, g.in_c, g.out_h, g.out_w});
  parallel_for(g.batch * g.in_c, [&](std::size_t p0, std::size_t p1) {
    for (std::size_t p = p0; p < p1; ++p) {
      const std::size_t c = p % g.in_c;
      const float* plane = input.ptr() + p * g.in_h * g.in_w;
      const float* w = weight.ptr() + c * g.k * g.k;
      float* dst = out.ptr() + p * g.out_h * g.out_w;
      const float bv = bias ? (*bias)[c] : 0.0f;
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          float s = 0.0f;
          for (std::size_t ki = 0; ki < g.k; ++ki) {
            const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
            if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
            for (std::size_t kj = 0; kj < g.k; ++kj) {
              const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
              if (iw < 0 || iw >= static_cast<long>(g.in_w)) continue;
              s += w[ki * g.k + kj] * plane[static_cast<std::size_t>(ih) * g.in_w +
                                            static_cast<std::size_t>(iw)];
            }
          }
          dst[oh * g.out_w + ow] = s + bv;
        }
      }
    }
  });
  return out;
}

ConvGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                                    std::size_t stride, std::size_t padding,
                                    const Tensor& grad_output) {
  const ConvGeometry g = conv_geometry(input, weight, stride, padding, "depthwise_conv2d_backward");
  if (weight.dim(0) != g.in_c || weight.dim(1) != 1) {
    mismatch("depthwise_conv2d_backward", "weight must be (C, 1, k, k)", input.shape(),
             weight.shape());
  }
  const Shape expected{g.batch, g.in_c, g.out_h, g.out_w};
  if (grad_output.shape() != expected) {
    throw ShapeError("depthwise_conv2d_backward: grad_output " +
                     shape_to_string(grad_output.shape()) + " expected " +
                     shape_to_string(expected));
  }
  ConvGrads grads{Tensor(input.shape()), Tensor(weight.shape()),
                  has_bias ? Tensor({g.in_c}) : Tensor()};
  // Parallel over channels; each channel sums over the batch in order.
  parallel_for(g.in_c, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      const float* w = weight.ptr() + c * g.k * g.k;
      float* gw = grads.weight.ptr() + c * g.k * g.k;
      float gb = 0.0f;
      for (std::size_t b = 0; b < g.batch; ++b) {
        const std::size_t p = b * g.in_c + c;
        const float* plane = input.ptr() + p * g.in_h * g.in_w;
        float* gplane = grads.input.ptr() + p * g.in_h * g.in_w;
        const float* go = grad_output.ptr() + p * g.out_h * g.out_w;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const float d = go[oh * g.out_w + ow];
            gb += d;
            for (std::size_t ki = 0; ki < g.k; ++ki) {
              const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
              if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kj = 0; kj < g.k; ++kj) {
                const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                if (iw < 0 || iw >= static_cast<long>(g.in_w)) continue;
                const std::size_t off =
                    static_cast<std::size_t>(ih) * g.in_w + static_cast<std::size_t>(iw);
                gw[ki * g.k + kj] += d * plane[off];
                gplane[off] += d * w[ki * g.k + kj];
              }
            }
          }
        }
      }
      if (has_bias) grads.bias[c] = gb;
    }
  });
  return grads;
}

Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor* bias) {
  require_rank(input, 2, "dense", "input");
  require_rank(weight, 2, "dense", "weight");
  if (input.dim(1) != weight.dim(1)) {
    mismatch("dense", "input features differ from weight F_in", input.shape(), weight.shape());
  }
  const std::size_t batch = input.dim(0);
  const std::size_t fout = weight.dim(0);
  const std::size_t fin = weight.dim(1);
  check_bias(bias, fout, "dense");
  Tensor out({batch, fout});
  detail::gemm_nt(batch, fout, fin, input.ptr(), weight.ptr(), out.ptr(), false);
  if (bias) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < fout; ++o) out[b * fout + o] += (*bias)[o];
    }
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                          const Tensor& grad_output) {
  require_rank(input, 2, "dense_backward", "input");
  require_rank(weight, 2, "dense_backward", "weight");
  const std::size_t batch = input.dim(0);
  const std::size_t fout = weight.dim(0);
  const std::size_t fin = weight.dim(1);
  if (input.dim(1) != fin) {
    mismatch("dense_backward", "input features differ from weight F_in", input.shape(),
             weight.shape());
  }
  if (grad_output.shape() != Shape{batch, fout}) {
    throw ShapeError("dense_backward: grad_output " + shape_to_string(grad_output.shape()) +
                     " expected " + shape_to_string({batch, fout}));
  }
  DenseGrads grads{Tensor(input.shape()), Tensor(weight.shape()),
                   has_bias ? Tensor({fout}) : Tensor()};
  detail::gemm_tn(fout, fin, batch, grad_output.ptr(), input.ptr(), grads.weight.ptr(), false);
  detail::gemm_nn(batch, fin, fout, grad_output.ptr(), weight.ptr(), grads.input.ptr(), false);
  if (has_bias) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < fout; ++o) grads.bias[o] += grad_output[b * fout + o];
    }
  }
  return grads;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > 0.0f ? input[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  if (input.shape() != grad_output.shape()) {
    throw ShapeError("relu_backward: grad_output " + shape_to_string(grad_output.shape()) +
                     " vs input " + shape_to_string(input.shape()));
  }
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) {
    out[i] = input[i] > 0.0f ? grad_output[i] : 0.0f;
  }
  return out;
}

MaxPoolResult maxpool2d_forward(const Tensor& input) {
  require_rank(input, 4, "maxpool2d", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) {
    throw ShapeError("maxpool2d: input " + shape_to_string(input.shape()) +
                     " too small for a 2x2 window");
  }
  MaxPoolResult r{Tensor({n, c, oh, ow}), std::vector<std::uint32_t>(n * c * oh * ow)};
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = base + (2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t off = base + (2 * i + di) * w + (2 * j + dj);
            if (input[off] > input[best]) best = off;
          }
        }
        const std::size_t o = (p * oh + i) * ow + j;
        r.output[o] = input[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

Tensor maxpool2d_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                          const Tensor& grad_output) {
  if (argmax.size() != grad_output.numel()) {
    throw ShapeError("maxpool2d_backward: argmax size does not match grad_output");
  }
  Tensor out(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) out[argmax[o]] += grad_output[o];
  return out;
}

Tensor global_avg_pool_forward(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool", "input");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  Tensor out({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    const float* plane = input.ptr() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) s += plane[i];
    out[p] = static_cast<float>(s / static_cast<double>(hw));
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output) {
  if (input_shape.size() != 4 || grad_output.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw ShapeError("global_avg_pool_backward: grad_output " +
                     shape_to_string(grad_output.shape()) + " incompatible with input " +
                     shape_to_string(input_shape));
  }
  const std::size_t hw = input_shape[2] * input_shape[3];
  Tensor out(input_shape);
  const float scale = 1.0f / static_cast<float>(hw);
  for (std::size_t p = 0; p < grad_output.numel(); ++p) {
    const float v = grad_output[p] * scale;
    std::fill(out.ptr() + p * hw, out.ptr() + (p + 1) * hw, v);
  }
  return out;
}

namespace {

void check_bn_params(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                     const char* op) {
  require_rank(input, 4, op, "input");
  const std::size_t c = input.dim(1);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError(std::string(op) + ": gamma/beta " + shape_to_string(gamma.shape()) +
                     " do not match " + std::to_string(c) + " channels of input " +
                     shape_to_string(input.shape()));
  }
}

}  // namespace

BatchNormCache batchnorm2d_forward_train(const Tensor& input, const Tensor& gamma,
                                         const Tensor& beta, float eps) {
  check_bn_params(input, gamma, beta, "batchnorm2d");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const double count = static_cast<double>(n * hw);
  BatchNormCache cache{Tensor(input.shape()), Tensor(input.shape()), std::vector<float>(c),
                       std::vector<float>(c), std::vector<float>(c)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const float* plane = input.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) sum += plane[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const float* plane = input.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = plane[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / count;
    const float inv_std = static_cast<float>(1.0 / std::sqrt(var + eps));
    cache.batch_mean[ch] = static_cast<float>(mean);
    cache.batch_var[ch] = static_cast<float>(var);
    cache.inv_std[ch] = inv_std;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const float xh = (input[off + i] - static_cast<float>(mean)) * inv_std;
        cache.normalized[off + i] = xh;
        cache.output[off + i] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  return cache;
}

Tensor batchnorm2d_forward_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                const Tensor& running_mean, const Tensor& running_var,
                                float eps) {
  check_bn_params(input, gamma, beta, "batchnorm2d");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (running_mean.shape() != Shape{c} || running_var.shape() != Shape{c}) {
    throw ShapeError("batchnorm2d: running statistics do not match channel count");
  }
  Tensor out(input.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float inv_std = 1.0f / std::sqrt(running_var[ch] + eps);
    const float scale = gamma[ch] * inv_std;
    const float shift = beta[ch] - running_mean[ch] * scale;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) out[off + i] = input[off + i] * scale + shift;
    }
  }
  return out;
}

BatchNormGrads batchnorm2d_backward(const BatchNormCache& cache, const Tensor& gamma,
                                    const Tensor& grad_output) {
  const Shape& shape = cache.normalized.shape();
  if (grad_output.shape() != shape) {
    throw ShapeError("batchnorm2d_backward: grad_output " + shape_to_string(grad_output.shape()) +
                     " expected " + shape_to_string(shape));
  }
  const std::size_t n = shape[0], c = shape[1], hw = shape[2] * shape[3];
  const double count = static_cast<double>(n * hw);
  BatchNormGrads g{Tensor(shape), Tensor({c}), Tensor({c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += grad_output[off + i];
        sum_dy_xh += static_cast<double>(grad_output[off + i]) * cache.normalized[off + i];
      }
    }
    g.beta[ch] = static_cast<float>(sum_dy);
    g.gamma[ch] = static_cast<float>(sum_dy_xh);
    const double k = gamma[ch] * cache.inv_std[ch] / count;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        g.input[off + i] = static_cast<float>(
            k * (count * grad_output[off + i] - sum_dy - cache.normalized[off + i] * sum_dy_xh));
      }
    }
  }
  return g;
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(batch));
  }
  CrossEntropyResult r{0.0f, Tensor(logits.shape())};
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(label) +
                       " out of range for " + std::to_string(classes) + " classes");
    }
    const float* row = logits.ptr() + b * classes;
    float* prob = r.probabilities.ptr() + b * classes;
    const float mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(static_cast<double>(row[k] - mx));
    for (std::size_t k = 0; k < classes; ++k) {
      prob[k] = static_cast<float>(std::exp(static_cast<double>(row[k] - mx)) / z);
    }
    total += std::log(z) - static_cast<double>(row[label] - mx);
  }
  r.loss = batch ? static_cast<float>(total / static_cast<double>(batch)) : 0.0f;
  return r;
}

Tensor softmax_cross_entropy_backward(const Tensor& probabilities, std::span<const int> labels) {
  require_rank(probabilities, 2, "softmax_cross_entropy_backward", "probabilities");
  const std::size_t batch = probabilities.dim(0), classes = probabilities.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("softmax_cross_entropy_backward: label count does not match batch");
  }
  Tensor g = probabilities;
  const float inv = 1.0f / static_cast<float>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    g[b * classes + static_cast<std::size_t>(labels[b])] -= 1.0f;
    for (std::size_t k = 0; k < classes; ++k) g[b * classes + k] *= inv;
  }
  return g;
}

}  // namespace prunekit::ops
