#include "prunekit/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "prunekit/errors.hpp"
#include "prunekit/ops.hpp"

namespace prunekit {
namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::Conv, "Conv"},
    {LayerKind::DepthwiseConv, "DepthwiseConv"},
    {LayerKind::PointwiseConv, "PointwiseConv"},
    {LayerKind::Dense, "Dense"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::MaxPool, "MaxPool"},
    {LayerKind::GlobalAvgPool, "GlobalAvgPool"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::Flatten, "Flatten"},
};

std::string layer_label(const Layer& layer) {
  return "layer '" + layer.id + "' (" + std::string(to_string(layer.kind)) + ")";
}

std::size_t scaled(std::size_t channels, double width) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(channels * width)));
}

void check_build_options(const BuildOptions& o) {
  if (o.input_shape.size() != 3) throw ShapeError("input shape must be (C, H, W)");
  if (o.input_shape[0] != 3) {
    throw ShapeError("built-in architectures expect 3 input channels, got " +
                     std::to_string(o.input_shape[0]));
  }
  if (o.num_classes < 2) {
    throw std::invalid_argument("num_classes must be >= 2, got " + std::to_string(o.num_classes));
  }
  if (!(o.width > 0.0 && o.width <= 1.0)) {
    throw std::invalid_argument("width multiplier must be in (0, 1]");
  }
}

Layer make_conv(std::string id, LayerKind kind, std::size_t in, std::size_t out, std::size_t k,
                std::size_t stride, std::size_t pad, bool bias, bool prunable) {
  Layer l;
  l.id = std::move(id);
  l.kind = kind;
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = k;
  l.stride = stride;
  l.padding = pad;
  l.bias = bias;
  l.prunable = prunable;
  return l;
}

Layer make_simple(std::string id, LayerKind kind) {
  Layer l;
  l.id = std::move(id);
  l.kind = kind;
  return l;
}

Layer make_bn(std::string id, std::size_t channels) {
  Layer l = make_simple(std::move(id), LayerKind::BatchNorm);
  l.in_channels = l.out_channels = channels;
  return l;
}

Layer make_dense(std::string id, std::size_t in, std::size_t out) {
  Layer l = make_simple(std::move(id), LayerKind::Dense);
  l.in_channels = in;
  l.out_channels = out;
  l.bias = true;
  return l;
}

// Portable uniform draw in [-bound, bound) from the top 24 bits of a 64-bit engine.
float uniform_symmetric(std::mt19937_64& rng, float bound) {
  const double u = static_cast<double>(rng() >> 40) / static_cast<double>(1ull << 24);
  return static_cast<float>((2.0 * u - 1.0) * bound);
}

void init_layer(Layer& layer, std::mt19937_64& rng) {
  layer.params.clear();
  for (const auto& [name, shape] : expected_param_shapes(layer)) {
    layer.params.emplace(name, Tensor(shape));
  }
  std::size_t fan_in = 0;
  switch (layer.kind) {
    case LayerKind::Conv:
    case LayerKind::PointwiseConv:
      fan_in = layer.in_channels * layer.kernel * layer.kernel;
      break;
    case LayerKind::DepthwiseConv:
      fan_in = layer.kernel * layer.kernel;
      break;
    case LayerKind::Dense:
      fan_in = layer.in_channels;
      break;
    case LayerKind::BatchNorm:
      layer.params.at("gamma").fill(1.0f);
      layer.params.at("running_var").fill(1.0f);
      return;
    default:
      return;
  }
  const float bound = fan_in ? static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)))
                             : 0.0f;
  for (float& w : layer.params.at("weight").data()) w = uniform_symmetric(rng, bound);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "Unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

bool is_parameterized(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv:
    case LayerKind::DepthwiseConv:
    case LayerKind::PointwiseConv:
    case LayerKind::Dense:
    case LayerKind::BatchNorm:
      return true;
    default:
      return false;
  }
}

bool is_filter_layer(LayerKind kind) {
  return kind == LayerKind::Conv || kind == LayerKind::PointwiseConv;
}

bool is_trainable_param(LayerKind kind, std::string_view name) {
  if (kind == LayerKind::BatchNorm) return name == "gamma" || name == "beta";
  return name == "weight" || name == "bias";
}

std::map<std::string, Shape> expected_param_shapes(const Layer& l) {
  std::map<std::string, Shape> shapes;
  switch (l.kind) {
    case LayerKind::Conv:
    case LayerKind::PointwiseConv:
      shapes["weight"] = {l.out_channels, l.in_channels, l.kernel, l.kernel};
      if (l.bias) shapes["bias"] = {l.out_channels};
      break;
    case LayerKind::DepthwiseConv:
      shapes["weight"] = {l.out_channels, 1, l.kernel, l.kernel};
      if (l.bias) shapes["bias"] = {l.out_channels};
      break;
    case LayerKind::Dense:
      shapes["weight"] = {l.out_channels, l.in_channels};
      if (l.bias) shapes["bias"] = {l.out_channels};
      break;
    case LayerKind::BatchNorm:
      for (const char* n : {"gamma", "beta", "running_mean", "running_var"}) {
        shapes[n] = {l.out_channels};
      }
      break;
    default:
      break;
  }
  return shapes;
}

std::string param_key(const Layer& layer, std::string_view name) {
  return layer.id + "/" + std::string(name);
}

std::optional<std::size_t> ModelGraph::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].id == id) return i;
  }
  return std::nullopt;
}

const Layer& ModelGraph::layer(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw std::out_of_range("unknown layer '" + std::string(id) + "'");
  return layers[*idx];
}

Layer& ModelGraph::layer(std::string_view id) {
  auto idx = index_of(id);
  if (!idx) throw std::out_of_range("unknown layer '" + std::string(id) + "'");
  return layers[*idx];
}

std::vector<ActivationShape> ModelGraph::infer_shapes(const Shape& input_chw) const {
  if (input_chw.size() != 3) {
    throw ShapeError("model input shape must be (C, H, W), got " + shape_to_string(input_chw));
  }
  std::vector<ActivationShape> out;
  out.reserve(layers.size());
  ActivationShape cur = input_chw;
  for (const Layer& l : layers) {
    auto fail = [&](const std::string& why) {
      throw ShapeError(layer_label(l) + ": " + why + " (incoming activation " +
                       shape_to_string(cur) + ")");
    };
    const bool spatial = cur.size() == 3;
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::PointwiseConv:
      case LayerKind::DepthwiseConv: {
        if (!spatial) fail("convolution needs a (C, H, W) activation");
        if (cur[0] != l.in_channels) {
          fail("expects " + std::to_string(l.in_channels) + " input channels");
        }
        if (l.kind == LayerKind::DepthwiseConv && l.in_channels != l.out_channels) {
          fail("depthwise conv must keep channel count");
        }
        if (l.kind == LayerKind::PointwiseConv &&
            (l.kernel != 1 || l.stride != 1 || l.padding != 0)) {
          fail("pointwise conv must have k=1, stride=1, padding=0");
        }
        if (l.kernel < 1 || l.stride < 1) fail("kernel and stride must be >= 1");
        try {
          cur = {l.out_channels, ops::conv_out_dim(cur[1], l.kernel, l.stride, l.padding),
                 ops::conv_out_dim(cur[2], l.kernel, l.stride, l.padding)};
        } catch (const ShapeError& e) {
          fail(e.what());
        }
        break;
      }
      case LayerKind::BatchNorm:
        if (!spatial) fail("batchnorm needs a (C, H, W) activation");
        if (cur[0] != l.in_channels || l.in_channels != l.out_channels) {
          fail("expects " + std::to_string(l.in_channels) + " channels");
        }
        break;
      case LayerKind::MaxPool:
        if (!spatial) fail("max-pool needs a (C, H, W) activation");
        if (cur[1] < 2 || cur[2] < 2) fail("spatial size too small for 2x2 pooling");
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      case LayerKind::GlobalAvgPool:
        if (!spatial) fail("global average pooling needs a (C, H, W) activation");
        cur = {cur[0]};
        break;
      case LayerKind::Flatten:
        if (spatial) cur = {cur[0] * cur[1] * cur[2]};
        break;
      case LayerKind::Dense:
        if (spatial) fail("dense layer needs a flat activation");
        if (cur[0] != l.in_channels) {
          fail("expects " + std::to_string(l.in_channels) + " input features");
        }
        cur = {l.out_channels};
        break;
      case LayerKind::ReLU:
        break;
    }
    out.push_back(cur);
  }
  return out;
}

void ModelGraph::validate() const {
  std::set<std::string_view> ids;
  for (const Layer& l : layers) {
    if (l.id.empty()) throw ShapeError("layer with empty id");
    if (!ids.insert(l.id).second) throw ShapeError("duplicate layer id '" + l.id + "'");
    const auto expected = expected_param_shapes(l);
    if (l.params.size() != expected.size()) {
      throw ShapeError(layer_label(l) + ": has " + std::to_string(l.params.size()) +
                       " parameter tensors, expected " + std::to_string(expected.size()));
    }
    for (const auto& [name, shape] : expected) {
      auto it = l.params.find(name);
      if (it == l.params.end()) throw ShapeError(layer_label(l) + ": missing parameter '" + name + "'");
      if (it->second.shape() != shape) {
        throw ShapeError(layer_label(l) + ": parameter '" + name + "' has shape " +
                         shape_to_string(it->second.shape()) + ", hyperparameters imply " +
                         shape_to_string(shape));
      }
    }
    if (l.prunable && !is_filter_layer(l.kind)) {
      throw ShapeError(layer_label(l) + ": only Conv and PointwiseConv layers can be prunable");
    }
  }
  const auto shapes = infer_shapes();
  if (!shapes.empty()) {
    const ActivationShape& last = shapes.back();
    if (last.size() != 1 || last[0] != num_classes) {
      throw ShapeError("model output " + shape_to_string(last) + " does not match " +
                       std::to_string(num_classes) + " classes");
    }
  }
}

ModelGraph build_vgg16_gap(const BuildOptions& options) {
  check_build_options(options);
  static constexpr std::size_t kPlan[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0,
                                          512, 512, 512, 0, 512, 512, 512, 0};
  ModelGraph m;
  m.input_shape = options.input_shape;
  m.num_classes = options.num_classes;
  std::size_t in = options.input_shape[0];
  std::size_t conv = 0, pool = 0;
  for (std::size_t c : kPlan) {
    if (c == 0) {
      m.layers.push_back(make_simple("pool" + std::to_string(++pool), LayerKind::MaxPool));
      continue;
    }
    const std::string n = std::to_string(++conv);
    const std::size_t out = scaled(c, options.width);
    m.layers.push_back(make_conv("conv" + n, LayerKind::Conv, in, out, 3, 1, 1, true, true));
    if (options.batchnorm) m.layers.push_back(make_bn("bn" + n, out));
    m.layers.push_back(make_simple("relu" + n, LayerKind::ReLU));
    in = out;
  }
  const std::size_t hidden = scaled(512, options.width);
  m.layers.push_back(make_simple("gap", LayerKind::GlobalAvgPool));
  m.layers.push_back(make_dense("fc1", in, hidden));
  m.layers.push_back(make_simple("fc1_relu", LayerKind::ReLU));
  m.layers.push_back(make_dense("fc2", hidden, options.num_classes));
  initialize_parameters(m, options.seed);
  m.validate();
  return m;
}

ModelGraph build_mobilenet_v1(const BuildOptions& options) {
  check_build_options(options);
  struct Block {
    std::size_t out;
    std::size_t stride;
  };
  static constexpr Block kBlocks[] = {{64, 1},  {128, 2}, {128, 1}, {256, 2}, {256, 1},
                                      {512, 2}, {512, 1}, {512, 1}, {512, 1}, {512, 1},
                                      {512, 1}, {1024, 2}, {1024, 1}};
  ModelGraph m;
  m.input_shape = options.input_shape;
  m.num_classes = options.num_classes;
  std::size_t in = scaled(32, options.width);
  m.layers.push_back(
      make_conv("conv1", LayerKind::Conv, options.input_shape[0], in, 3, 2, 1, false, true));
  m.layers.push_back(make_bn("bn1", in));
  m.layers.push_back(make_simple("relu1", LayerKind::ReLU));
  std::size_t b = 0;
  for (const Block& blk : kBlocks) {
    const std::string n = std::to_string(++b);
    const std::size_t out = scaled(blk.out, options.width);
    m.layers.push_back(make_conv("dw" + n, LayerKind::DepthwiseConv, in, in, 3, blk.stride, 1,
                                 false, false));
    m.layers.push_back(make_bn("dw" + n + "_bn", in));
    m.layers.push_back(make_simple("dw" + n + "_relu", LayerKind::ReLU));
    m.layers.push_back(
        make_conv("pw" + n, LayerKind::PointwiseConv, in, out, 1, 1, 0, false, true));
    m.layers.push_back(make_bn("pw" + n + "_bn", out));
    m.layers.push_back(make_simple("pw" + n + "_relu", LayerKind::ReLU));
    in = out;
  }
  const std::size_t hidden = scaled(512, options.width);
  m.layers.push_back(make_simple("gap", LayerKind::GlobalAvgPool));
  m.layers.push_back(make_dense("fc1", in, hidden));
  m.layers.push_back(make_simple("fc1_relu", LayerKind::ReLU));
  m.layers.push_back(make_dense("fc2", hidden, options.num_classes));
  initialize_parameters(m, options.seed);
  m.validate();
  return m;
}

ModelGraph build_simple_cnn(const SimpleCnnOptions& o) {
  if (o.input_shape.size() != 3) throw ShapeError("input shape must be (C, H, W)");
  if (o.num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (o.channels.empty()) throw std::invalid_argument("at least one conv layer required");
  ModelGraph m;
  m.input_shape = o.input_shape;
  m.num_classes = o.num_classes;
  std::size_t in = o.input_shape[0];
  for (std::size_t i = 0; i < o.channels.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    m.layers.push_back(make_conv("conv" + n, LayerKind::Conv, in, o.channels[i], o.kernel, 1,
                                 o.kernel / 2, o.bias, true));
    if (o.batchnorm) m.layers.push_back(make_bn("bn" + n, o.channels[i]));
    m.layers.push_back(make_simple("relu" + n, LayerKind::ReLU));
    if (i < o.pool_after.size() && o.pool_after[i]) {
      m.layers.push_back(make_simple("pool" + n, LayerKind::MaxPool));
    }
    in = o.channels[i];
  }
  std::size_t features = in;
  if (o.flatten_head) {
    const auto shapes = m.infer_shapes();
    const Shape& s = shapes.back();
    features = s[0] * s[1] * s[2];
    m.layers.push_back(make_simple("flatten", LayerKind::Flatten));
  } else {
    m.layers.push_back(make_simple("gap", LayerKind::GlobalAvgPool));
  }
  if (o.hidden > 0) {
    Layer fc1 = make_dense("fc1", features, o.hidden);
    fc1.bias = o.bias;
    m.layers.push_back(fc1);
    m.layers.push_back(make_simple("fc1_relu", LayerKind::ReLU));
    features = o.hidden;
  }
  Layer head = make_dense(o.hidden > 0 ? "fc2" : "fc1", features, o.num_classes);
  head.bias = o.bias;
  m.layers.push_back(head);
  initialize_parameters(m, o.seed);
  m.validate();
  return m;
}

void initialize_parameters(ModelGraph& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Layer& l : model.layers) init_layer(l, rng);
}

void replace_classifier(ModelGraph& model, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (model.layers.empty() || model.layers.back().kind != LayerKind::Dense) {
    throw ShapeError("model has no final Dense classifier to replace");
  }
  Layer& head = model.layers.back();
  head.out_channels = num_classes;
  std::mt19937_64 rng(seed);
  init_layer(head, rng);
  model.num_classes = num_classes;
  model.validate();
}

namespace {

Tensor run_layer(const Layer& l, Layer* mutable_layer, const Tensor& x, GradientTape* tape,
                 bool training) {
  const Tensor* bias = l.bias ? &l.params.at("bias") : nullptr;
  switch (l.kind) {
    case LayerKind::Conv:
    case LayerKind::PointwiseConv:
      return ag::conv2d(tape, x, l.params.at("weight"), bias, param_key(l, "weight"),
                        param_key(l, "bias"), l.stride, l.padding);
    case LayerKind::DepthwiseConv:
      return ag::depthwise_conv2d(tape, x, l.params.at("weight"), bias, param_key(l, "weight"),
                                  param_key(l, "bias"), l.stride, l.padding);
    case LayerKind::Dense:
      return ag::dense(tape, x, l.params.at("weight"), bias, param_key(l, "weight"),
                       param_key(l, "bias"));
    case LayerKind::ReLU:
      return ag::relu(tape, x);
    case LayerKind::MaxPool:
      return ag::maxpool2d(tape, x);
    case LayerKind::GlobalAvgPool:
      return ag::global_avg_pool(tape, x);
    case LayerKind::Flatten:
      return ag::flatten(tape, x);
    case LayerKind::BatchNorm: {
      const Tensor& gamma = l.params.at("gamma");
      const Tensor& beta = l.params.at("beta");
      if (!training) {
        return ops::batchnorm2d_forward_eval(x, gamma, beta, l.params.at("running_mean"),
                                             l.params.at("running_var"), l.eps);
      }
      ops::BatchNormCache stats;
      Tensor y = ag::batchnorm2d(tape, x, gamma, beta, param_key(l, "gamma"),
                                 param_key(l, "beta"), l.eps, &stats);
      if (mutable_layer) {
        const double count = static_cast<double>(x.dim(0) * x.dim(2) * x.dim(3));
        const double unbias = count > 1 ? count / (count - 1) : 1.0;
        Tensor& rm = mutable_layer->params.at("running_mean");
        Tensor& rv = mutable_layer->params.at("running_var");
        const float mom = l.momentum;
        for (std::size_t c = 0; c < rm.numel(); ++c) {
          rm[c] = (1.0f - mom) * rm[c] + mom * stats.batch_mean[c];
          rv[c] = (1.0f - mom) * rv[c] +
                  mom * static_cast<float>(stats.batch_var[c] * unbias);
        }
      }
      return y;
    }
  }
  throw std::logic_error("unhandled layer kind");
}

Tensor run_chain(const ModelGraph& model, std::vector<Layer>* mutable_layers, const Tensor& input,
                 GradientTape* tape, bool training) {
  if (input.rank() != 4) {
    throw ShapeError("model input must be (B, C, H, W), got " + shape_to_string(input.shape()));
  }
  if (input.dim(1) != model.input_shape.at(0)) {
    throw ShapeError("model expects " + std::to_string(model.input_shape[0]) +
                     " input channels, got " + shape_to_string(input.shape()));
  }
  Tensor x = input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    try {
      x = run_layer(l, mutable_layers ? &(*mutable_layers)[i] : nullptr, x, tape, training);
    } catch (const ShapeError& e) {
      throw ShapeError(layer_label(l) + ": " + e.what());
    }
  }
  return x;
}

}  // namespace

Tensor forward(ModelGraph& model, const Tensor& input, GradientTape* tape, bool training) {
  return run_chain(model, training ? &model.layers : nullptr, input, tape, training);
}

Tensor predict(const ModelGraph& model, const Tensor& input) {
  return run_chain(model, nullptr, input, nullptr, false);
}

}  // namespace prunekit
