#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prunekit/autograd.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

enum class LayerKind {
  Conv,
  DepthwiseConv,
  PointwiseConv,
  Dense,
  ReLU,
  MaxPool,
  GlobalAvgPool,
  BatchNorm,
  Flatten,
};

std::string_view to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

// True for kinds that own a weight tensor and can be metered as params.
bool is_parameterized(LayerKind kind);
// Conv and PointwiseConv: the kinds whose output filters can be removed.
bool is_filter_layer(LayerKind kind);

// One node of the chain. For Dense, in/out_channels hold F_in/F_out; for
// DepthwiseConv and BatchNorm in_channels == out_channels.
struct Layer {
  std::string id;
  LayerKind kind = LayerKind::ReLU;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = false;
  bool prunable = false;
  float eps = 1e-5f;       // BatchNorm only
  float momentum = 0.1f;   // BatchNorm only
  std::map<std::string, Tensor> params;

  bool operator==(const Layer&) const = default;
};

// Parameter names and shapes implied by kind + hyperparameters.
std::map<std::string, Shape> expected_param_shapes(const Layer& layer);
// Gradient-trained parameters (BatchNorm running statistics excluded).
bool is_trainable_param(LayerKind kind, std::string_view name);

// Shape of the activation flowing between layers: (C, H, W) or (F).
using ActivationShape = Shape;

struct ModelGraph {
  Shape input_shape;  // (C, H, W)
  std::size_t num_classes = 0;
  std::vector<Layer> layers;
  // Free-form string metadata carried through checkpoints (e.g. training LR).
  std::map<std::string, std::string> meta;

  std::optional<std::size_t> index_of(std::string_view id) const;
  const Layer& layer(std::string_view id) const;
  Layer& layer(std::string_view id);

  // Output activation shape of every layer for a (C, H, W) input. Throws
  // ShapeError naming the offending layer on any incompatibility.
  std::vector<ActivationShape> infer_shapes(const Shape& input_chw) const;
  std::vector<ActivationShape> infer_shapes() const { return infer_shapes(input_shape); }

  // Ids unique, parameter shapes consistent with hyperparameters, adjacent
  // layers shape-compatible, final output width equals num_classes.
  void validate() const;

  bool operator==(const ModelGraph&) const = default;
};

// Options shared by the built-in architecture constructors.
struct BuildOptions {
  Shape input_shape{3, 32, 32};
  std::size_t num_classes = 10;
  double width = 1.0;       // channel multiplier, 0 < width <= 1
  bool batchnorm = false;   // VGG only; MobileNet always uses BatchNorm
  std::uint64_t seed = 0;
};

// 13 biased 3x3 convs with 5 max-pools, global average pooling, and a
// 512-wide two-layer dense head. Every conv is prunable.
ModelGraph build_vgg16_gap(const BuildOptions& options);
// Standard conv + 13 depthwise-separable blocks, BatchNorm after every conv,
// global average pooling, Dense 1024->512->classes. Only the first conv and
// the pointwise convs are prunable.
ModelGraph build_mobilenet_v1(const BuildOptions& options);

// Small configurable chain for experiments and tests:
// [conv(k, pad=k/2) (+bn) relu (+maxpool)]* gap [dense hidden relu] dense.
struct SimpleCnnOptions {
  Shape input_shape{1, 8, 8};
  std::size_t num_classes = 2;
  std::vector<std::size_t> channels{4, 4};
  std::vector<bool> pool_after;  // per conv; missing entries mean false
  std::size_t kernel = 3;
  bool bias = true;
  bool batchnorm = false;
  std::size_t hidden = 0;  // 0: GAP feeds the classifier directly
  bool flatten_head = false;  // Flatten instead of GlobalAvgPool
  std::uint64_t seed = 0;
};
ModelGraph build_simple_cnn(const SimpleCnnOptions& options);

// Re-initialises weights of every parameterized layer (Kaiming-uniform, fan-in)
// and resets BatchNorm to gamma=1, beta=0, mean=0, var=1.
void initialize_parameters(ModelGraph& model, std::uint64_t seed);

// Replaces the final Dense layer with a freshly initialised one producing
// num_classes outputs; all other layers are kept.
void replace_classifier(ModelGraph& model, std::size_t num_classes, std::uint64_t seed);

// Runs the chain. In training mode BatchNorm uses batch statistics and
// updates its running estimates; with a tape every op is recorded.
Tensor forward(ModelGraph& model, const Tensor& input, GradientTape* tape, bool training);
// Evaluation-mode forward pass; never mutates the model.
Tensor predict(const ModelGraph& model, const Tensor& input);

// Parameter key used for gradient slots and optimizer state.
std::string param_key(const Layer& layer, std::string_view name);

}  // namespace prunekit
