#include "prunekit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "prunekit/errors.hpp"

namespace prunekit {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("decay factor must be in (0, 1]");
  }
  if (decay_every == 0) throw std::invalid_argument("decay period must be >= 1 epoch");
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
}

double learning_rate_at(const TrainConfig& config, std::size_t epoch) {
  return config.lr * std::pow(config.decay_factor, static_cast<double>(epoch / config.decay_every));
}

void AdamOptimizer::step(ModelGraph& model, const GradientTape& tape, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  for (Layer& layer : model.layers) {
    for (auto& [name, param] : layer.params) {
      if (!is_trainable_param(layer.kind, name)) continue;
      const std::string key = param_key(layer, name);
      if (!tape.has_grad(key)) continue;
      const Tensor& g = tape.grad(key);
      Moments& mom = state_[key];
      if (mom.m.size() != param.numel()) {
        mom.m.assign(param.numel(), 0.0f);
        mom.v.assign(param.numel(), 0.0f);
      }
      const double step = lr / c1;
      const double inv_c2 = 1.0 / c2;
      for (std::size_t i = 0; i < param.numel(); ++i) {
        mom.m[i] = b1 * mom.m[i] + (1.0f - b1) * g[i];
        mom.v[i] = b2 * mom.v[i] + (1.0f - b2) * g[i] * g[i];
        const double denom = std::sqrt(mom.v[i] * inv_c2) + eps_;
        param[i] -= static_cast<float>(step * mom.m[i] / denom);
      }
    }
  }
}

namespace {

// ReLU and max-pool swallow NaN activations, so a finite loss does not imply
// finite gradients.
std::optional<std::string> nonfinite_grad(const ModelGraph& model, const GradientTape& tape) {
  for (const Layer& layer : model.layers) {
    for (const auto& [name, param] : layer.params) {
      const std::string key = param_key(layer, name);
      if (!tape.has_grad(key)) continue;
      const Tensor& g = tape.grad(key);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (!std::isfinite(g[i])) return key;
      }
    }
  }
  return std::nullopt;
}

}  // namespace

void check_dataset_fits(const ModelGraph& model, const LabeledDataset& ds) {
  if (ds.size() == 0) throw ShapeError("dataset is empty");
  if (ds.sample_shape() != model.input_shape) {
    throw ShapeError("dataset samples " + shape_to_string(ds.sample_shape()) +
                     " do not match model input " + shape_to_string(model.input_shape));
  }
  if (ds.num_classes > model.num_classes) {
    throw ShapeError("dataset has " + std::to_string(ds.num_classes) +
                     " classes but the model predicts " + std::to_string(model.num_classes));
  }
}

namespace {

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t k = logits.dim(1);
  const float* p = logits.ptr() + row * k;
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

}  // namespace

TrainHistory train(ModelGraph& model, const LabeledDataset& train_set, const LabeledDataset* val_set,
                   const TrainConfig& config) {
  config.validate();
  TrainHistory history;
  history.lowest_lr = config.lr;
  if (config.epochs == 0) return history;
  check_dataset_fits(model, train_set);
  if (val_set) check_dataset_fits(model, *val_set);

  AdamOptimizer adam(config.beta1, config.beta2, config.adam_eps);
  GradientTape tape;
  const std::size_t n = train_set.size();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = learning_rate_at(config, epoch);
    history.lowest_lr = std::min(history.lowest_lr, lr);
    const std::uint64_t epoch_seed = config.seed * 1000003ull + epoch;
    const auto order = permutation(n, epoch_seed);
    std::vector<bool> flips;
    if (config.hflip) {
      std::mt19937_64 rng(epoch_seed ^ 0x9e3779b97f4a7c15ull);
      flips.resize(n);
      for (std::size_t i = 0; i < n; ++i) flips[i] = (rng() >> 63) != 0;
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Batch batch;
      if (config.hflip) {
        auto mask = std::make_unique<bool[]>(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) mask[i] = flips[start + i];
        batch = make_batch(train_set, idx, std::span<const bool>(mask.get(), idx.size()));
      } else {
        batch = make_batch(train_set, idx);
      }
      tape.zero_grad();
      const Tensor logits = forward(model, batch.images, &tape, true);
      const float loss = ag::softmax_cross_entropy(&tape, logits, batch.labels);
      if (!std::isfinite(loss)) {
        tape.clear_recording();
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      tape.backward();
      if (auto key = nonfinite_grad(model, tape)) {
        throw NumericError("non-finite gradient for " + *key + " at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      adam.step(model, tape, lr);
      loss_sum += static_cast<double>(loss) * static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (argmax_row(logits, i) == static_cast<std::size_t>(batch.labels[i])) ++correct;
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (val_set) rec.val_accuracy = evaluate(model, *val_set);
    history.epochs.push_back(rec);
  }
  return history;
}

double evaluate(const ModelGraph& model, const LabeledDataset& ds, std::size_t batch_size) {
  if (ds.size() == 0) throw std::invalid_argument("cannot evaluate on an empty dataset");
  check_dataset_fits(model, ds);
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t end = std::min(ds.size(), start + batch_size);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const Batch batch = make_batch(ds, idx);
    const Tensor logits = predict(model, batch.images);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (argmax_row(logits, i) == static_cast<std::size_t>(batch.labels[i])) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream os;
  os << "epoch,lr,train_loss,train_accuracy,val_accuracy\n";
  char buf[160];
  for (const EpochRecord& r : history.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,", r.epoch, r.lr, r.train_loss,
                  r.train_accuracy);
    os << buf;
    if (r.val_accuracy) {
      std::snprintf(buf, sizeof buf, "%.9g", *r.val_accuracy);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace prunekit
