#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "prunekit/model.hpp"
#include "prunekit/pruning.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit::testing {

// Direct loop-nest references, written without im2col or GEMM.
Tensor naive_conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
                    std::size_t stride, std::size_t padding);
Tensor naive_depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
                              std::size_t stride, std::size_t padding);
Tensor naive_dense(const Tensor& input, const Tensor& weight, const Tensor* bias);
Tensor naive_maxpool2x2(const Tensor& input);
Tensor naive_global_avg_pool(const Tensor& input);

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Closed-form counts computed independently of the metering module.
std::uint64_t conv_params(std::uint64_t k, std::uint64_t cin, std::uint64_t cout, bool bias);
std::uint64_t dense_params(std::uint64_t fin, std::uint64_t fout, bool bias);

// Bias-free, BatchNorm-free ReLU CNN with at most `max_layers` weighted layers
// (convs plus the dense classifier), convs of at most
// `max_channels` filters, random pooling and a GAP or Flatten head.
ModelGraph random_relu_cnn(std::mt19937_64& rng, std::size_t max_layers, std::size_t max_channels);

// Copy of the model with the step's filters zeroed instead of removed.
ModelGraph mask_filters(const ModelGraph& model, const PruningStep& step);

struct MaskingCase {
  double max_error = 0.0;
  std::string layer_id;
  std::size_t removed = 0;
};
// Prunes a random prunable layer of a random CNN and compares the pruned
// network with the masked one on a random batch.
MaskingCase masking_equivalence_case(std::uint64_t seed);

}  // namespace prunekit::testing
