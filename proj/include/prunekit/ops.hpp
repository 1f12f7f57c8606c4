#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "prunekit/tensor.hpp"

// Forward and backward kernels for every layer type used by the built-in
// networks. All kernels are deterministic: each output element is produced by
// a fixed summation order independent of the worker count.
namespace prunekit::ops {

// floor((in + 2*padding - kernel) / stride) + 1; throws when the window does not fit.
std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride,
                         std::size_t padding);

struct ConvGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;  // empty when the layer has no bias
};

// input (B, C_in, H, W), weight (C_out, C_in, k, k), bias (C_out) or nullptr.
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                      std::size_t stride, std::size_t padding);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                          std::size_t stride, std::size_t padding, const Tensor& grad_output);

// input (B, C, H, W), weight (C, 1, k, k). Channel c of the output reads channel c only.
Tensor depthwise_conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor* bias,
                                std::size_t stride, std::size_t padding);
ConvGrads depthwise_conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                                    std::size_t stride, std::size_t padding,
                                    const Tensor& grad_output);

struct DenseGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

// input (B, F_in), weight (F_out, F_in), bias (F_out) or nullptr.
Tensor dense_forward(const Tensor& input, const Tensor& weight, const Tensor* bias);
DenseGrads dense_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                          const Tensor& grad_output);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

// 2x2 window, stride 2, floor semantics on odd sizes.
struct MaxPoolResult {
  Tensor output;
  std::vector<std::uint32_t> argmax;  // flat input offset per output element
};
MaxPoolResult maxpool2d_forward(const Tensor& input);
Tensor maxpool2d_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                          const Tensor& grad_output);

// (B, C, H, W) -> (B, C)
Tensor global_avg_pool_forward(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output);

// Training-mode batch normalisation over (B, H, W) per channel.
struct BatchNormCache {
  Tensor output;
  Tensor normalized;  // x_hat
  std::vector<float> inv_std;
  std::vector<float> batch_mean;
  std::vector<float> batch_var;  // biased
};
struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};
BatchNormCache batchnorm2d_forward_train(const Tensor& input, const Tensor& gamma,
                                         const Tensor& beta, float eps);
Tensor batchnorm2d_forward_eval(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                const Tensor& running_mean, const Tensor& running_var,
                                float eps);
BatchNormGrads batchnorm2d_backward(const BatchNormCache& cache, const Tensor& gamma,
                                    const Tensor& grad_output);

// Mean cross-entropy over the batch; logits (B, K).
struct CrossEntropyResult {
  float loss = 0.0f;
  Tensor probabilities;
};
CrossEntropyResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor softmax_cross_entropy_backward(const Tensor& probabilities, std::span<const int> labels);

}  // namespace prunekit::ops
