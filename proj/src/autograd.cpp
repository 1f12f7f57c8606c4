#include "prunekit/autograd.hpp"

#include <stdexcept>

#include "prunekit/errors.hpp"

namespace prunekit {

Tensor& GradientTape::watch(const std::string& key, const Shape& shape) {
  auto it = grads_.find(key);
  if (it == grads_.end()) {
    it = grads_.emplace(key, Tensor(shape)).first;
  } else if (it->second.shape() != shape) {
    throw ShapeError("gradient slot '" + key + "' has shape " +
                     shape_to_string(it->second.shape()) + ", parameter is " +
                     shape_to_string(shape));
  }
  return it->second;
}

void GradientTape::record(BackwardFn fn) {
  if (loss_recorded_) throw std::logic_error("cannot record operations after the loss");
  nodes_.push_back(std::move(fn));
}

void GradientTape::record_loss(float value, Tensor grad_wrt_output) {
  if (loss_recorded_) throw std::logic_error("loss already recorded");
  nodes_.push_back([g = std::move(grad_wrt_output)](const Tensor&, GradientTape&) { return g; });
  loss_recorded_ = true;
  loss_value_ = value;
}

void GradientTape::backward() {
  if (nodes_.empty()) throw std::logic_error("backward called without a recorded forward pass");
  if (!loss_recorded_) throw std::logic_error("backward called before a loss was recorded");
  Tensor grad({1}, 1.0f);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) grad = (*it)(grad, *this);
  clear_recording();
}

void GradientTape::accumulate(const std::string& key, const Tensor& grad) {
  Tensor& slot = watch(key, grad.shape());
  for (std::size_t i = 0; i < grad.numel(); ++i) slot[i] += grad[i];
}

const Tensor& GradientTape::grad(const std::string& key) const {
  auto it = grads_.find(key);
  if (it == grads_.end()) throw std::out_of_range("no gradient for '" + key + "'");
  return it->second;
}

void GradientTape::zero_grad() {
  for (auto& [key, g] : grads_) g.fill(0.0f);
}

void GradientTape::clear_recording() {
  nodes_.clear();
  loss_recorded_ = false;
  loss_value_ = 0.0f;
}

namespace ag {

Tensor conv2d(GradientTape* tape, const Tensor& input, const Tensor& weight, const Tensor* bias,
              const std::string& weight_key, const std::string& bias_key, std::size_t stride,
              std::size_t padding) {
  Tensor out = ops::conv2d_forward(input, weight, bias, stride, padding);
  if (tape) {
    tape->watch(weight_key, weight.shape());
    if (bias) tape->watch(bias_key, bias->shape());
    tape->record([input, w = &weight, has_bias = bias != nullptr, weight_key, bias_key, stride,
                  padding](const Tensor& gout, GradientTape& t) {
      ops::ConvGrads g = ops::conv2d_backward(input, *w, has_bias, stride, padding, gout);
      t.accumulate(weight_key, g.weight);
      if (has_bias) t.accumulate(bias_key, g.bias);
      return std::move(g.input);
    });
  }
  return out;
}

Tensor depthwise_conv2d(GradientTape* tape, const Tensor& input, const Tensor& weight,
                        const Tensor* bias, const std::string& weight_key,
                        const std::string& bias_key, std::size_t stride, std::size_t padding) {
  Tensor out = ops::depthwise_conv2d_forward(input, weight, bias, stride, padding);
  if (tape) {
    tape->watch(weight_key, weight.shape());
    if (bias) tape->watch(bias_key, bias->shape());
    tape->record([input, w = &weight, has_bias = bias != nullptr, weight_key, bias_key, stride,
                  padding](const Tensor& gout, GradientTape& t) {
      ops::ConvGrads g =
          ops::depthwise_conv2d_backward(input, *w, has_bias, stride, padding, gout);
      t.accumulate(weight_key, g.weight);
      if (has_bias) t.accumulate(bias_key, g.bias);
      return std::move(g.input);
    });
  }
  return out;
}

Tensor dense(GradientTape* tape, const Tensor& input, const Tensor& weight, const Tensor* bias,
             const std::string& weight_key, const std::string& bias_key) {
  Tensor out = ops::dense_forward(input, weight, bias);
  if (tape) {
    tape->watch(weight_key, weight.shape());
    if (bias) tape->watch(bias_key, bias->shape());
    tape->record([input, w = &weight, has_bias = bias != nullptr, weight_key, bias_key](
                     const Tensor& gout, GradientTape& t) {
      ops::DenseGrads g = ops::dense_backward(input, *w, has_bias, gout);
      t.accumulate(weight_key, g.weight);
      if (has_bias) t.accumulate(bias_key, g.bias);
      return std::move(g.input);
    });
  }
  return out;
}

Tensor relu(GradientTape* tape, const Tensor& input) {
  Tensor out = ops::relu_forward(input);
  if (tape) {
    tape->record([input](const Tensor& gout, GradientTape&) {
      return ops::relu_backward(input, gout);
    });
  }
  return out;
}

Tensor maxpool2d(GradientTape* tape, const Tensor& input) {
  ops::MaxPoolResult r = ops::maxpool2d_forward(input);
  if (tape) {
    tape->record([shape = input.shape(), argmax = std::move(r.argmax)](const Tensor& gout,
                                                                       GradientTape&) {
      return ops::maxpool2d_backward(shape, argmax, gout);
    });
  }
  return std::move(r.output);
}

Tensor global_avg_pool(GradientTape* tape, const Tensor& input) {
  Tensor out = ops::global_avg_pool_forward(input);
  if (tape) {
    tape->record([shape = input.shape()](const Tensor& gout, GradientTape&) {
      return ops::global_avg_pool_backward(shape, gout);
    });
  }
  return out;
}

Tensor flatten(GradientTape* tape, const Tensor& input) {
  if (input.rank() < 2) throw ShapeError("flatten: input must have a batch axis");
  const std::size_t batch = input.dim(0);
  Tensor out = input.reshaped({batch, batch ? input.numel() / batch : 0});
  if (tape) {
    tape->record([shape = input.shape()](const Tensor& gout, GradientTape&) {
      return gout.reshaped(shape);
    });
  }
  return out;
}

Tensor batchnorm2d(GradientTape* tape, const Tensor& input, const Tensor& gamma,
                   const Tensor& beta, const std::string& gamma_key, const std::string& beta_key,
                   float eps, ops::BatchNormCache* stats_out) {
  ops::BatchNormCache cache = ops::batchnorm2d_forward_train(input, gamma, beta, eps);
  Tensor out = cache.output;
  if (stats_out) {
    stats_out->batch_mean = cache.batch_mean;
    stats_out->batch_var = cache.batch_var;
  }
  if (tape) {
    tape->watch(gamma_key, gamma.shape());
    tape->watch(beta_key, beta.shape());
    cache.output = Tensor();
    tape->record([cache = std::move(cache), g = &gamma, gamma_key, beta_key](
                     const Tensor& gout, GradientTape& t) {
      ops::BatchNormGrads grads = ops::batchnorm2d_backward(cache, *g, gout);
      t.accumulate(gamma_key, grads.gamma);
      t.accumulate(beta_key, grads.beta);
      return std::move(grads.input);
    });
  }
  return out;
}

float softmax_cross_entropy(GradientTape* tape, const Tensor& logits,
                            std::span<const int> labels) {
  ops::CrossEntropyResult r = ops::softmax_cross_entropy(logits, labels);
  if (tape) tape->record_loss(r.loss, ops::softmax_cross_entropy_backward(r.probabilities, labels));
  return r.loss;
}

float sum_of_squares(GradientTape* tape, const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += static_cast<double>(v) * v;
  if (tape) {
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) g[i] = 2.0f * x[i];
    tape->record_loss(static_cast<float>(s), std::move(g));
  }
  return static_cast<float>(s);
}

}  // namespace ag
}  // namespace prunekit
