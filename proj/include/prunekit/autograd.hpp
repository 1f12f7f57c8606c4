#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prunekit/ops.hpp"
#include "prunekit/tensor.hpp"

namespace prunekit {

// Reverse-mode recorder for a linear chain of operations.
//
// Each recorded node maps the gradient of its output to the gradient of its
// input and adds parameter gradients into the tape's slots. Parameters are
// identified by string key ("conv1/weight") and referenced, not copied, so they
// must stay alive and unmodified until backward() returns. Gradients accumulate
// across backward calls until zero_grad().
class GradientTape {
 public:
  using BackwardFn = std::function<Tensor(const Tensor& grad_output, GradientTape& tape)>;

  // Declares a trainable parameter; the slot starts at zero on first sight.
  Tensor& watch(const std::string& key, const Shape& shape);
  void record(BackwardFn fn);
  // Terminal node: a scalar loss whose gradient w.r.t. the chain output is given.
  void record_loss(float value, Tensor grad_wrt_output);

  bool has_recording() const { return !nodes_.empty(); }
  bool has_loss() const { return loss_recorded_; }
  float loss() const { return loss_value_; }

  // Runs the recorded chain in reverse and clears the recording. Throws
  // std::logic_error without a recorded forward pass and loss.
  void backward();

  void accumulate(const std::string& key, const Tensor& grad);
  const Tensor& grad(const std::string& key) const;
  bool has_grad(const std::string& key) const { return grads_.count(key) != 0; }
  const std::map<std::string, Tensor>& grads() const { return grads_; }

  void zero_grad();
  // Drops the recording but keeps gradient slots.
  void clear_recording();

 private:
  std::vector<BackwardFn> nodes_;
  std::map<std::string, Tensor> grads_;
  bool loss_recorded_ = false;
  float loss_value_ = 0.0f;
};

// Recording wrappers around the ops kernels. Each returns the forward result
// and, when a tape is given, appends the matching backward node.
namespace ag {

Tensor conv2d(GradientTape* tape, const Tensor& input, const Tensor& weight, const Tensor* bias,
              const std::string& weight_key, const std::string& bias_key, std::size_t stride,
              std::size_t padding);
Tensor depthwise_conv2d(GradientTape* tape, const Tensor& input, const Tensor& weight,
                        const Tensor* bias, const std::string& weight_key,
                        const std::string& bias_key, std::size_t stride, std::size_t padding);
Tensor dense(GradientTape* tape, const Tensor& input, const Tensor& weight, const Tensor* bias,
             const std::string& weight_key, const std::string& bias_key);
Tensor relu(GradientTape* tape, const Tensor& input);
Tensor maxpool2d(GradientTape* tape, const Tensor& input);
Tensor global_avg_pool(GradientTape* tape, const Tensor& input);
Tensor flatten(GradientTape* tape, const Tensor& input);
// Training-mode normalisation; batch statistics are written to *stats_out when given.
Tensor batchnorm2d(GradientTape* tape, const Tensor& input, const Tensor& gamma,
                   const Tensor& beta, const std::string& gamma_key, const std::string& beta_key,
                   float eps, ops::BatchNormCache* stats_out = nullptr);

// Mean softmax cross-entropy; records the loss node when a tape is given.
float softmax_cross_entropy(GradientTape* tape, const Tensor& logits, std::span<const int> labels);
// sum(x^2); used for analytic gradient checks.
float sum_of_squares(GradientTape* tape, const Tensor& x);

}  // namespace ag
}  // namespace prunekit
