#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prunekit/autograd.hpp"
#include "prunekit/data.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

struct TrainConfig {
  double lr = 0.001;
  double decay_factor = 0.1;
  std::size_t decay_every = 40;  // epochs per step decay
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool hflip = false;  // random horizontal flips during training

  void validate() const;
};

// lr * decay_factor^floor(epoch / decay_every), epoch counted from 0.
double learning_rate_at(const TrainConfig& config, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  // Lowest learning rate used; the initial rate when no epoch ran.
  double lowest_lr = 0.0;
};

class AdamOptimizer {
 public:
  AdamOptimizer(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // One update of every trainable parameter from the tape's gradients.
  void step(ModelGraph& model, const GradientTape& tape, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<float> m;
    std::vector<float> v;
  };
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> state_;
};

// Throws ShapeError when the dataset does not fit the model's input or class count.
void check_dataset_fits(const ModelGraph& model, const LabeledDataset& ds);

// Mini-batch Adam with step decay. Evaluates `val` after every epoch when given.
// Throws NumericError naming epoch and batch on a non-finite loss.
TrainHistory train(ModelGraph& model, const LabeledDataset& train_set, const LabeledDataset* val_set,
                   const TrainConfig& config);

// Fraction of argmax-correct predictions (evaluation mode). Ties resolve to the
// lowest class index.
double evaluate(const ModelGraph& model, const LabeledDataset& ds, std::size_t batch_size = 256);

// epoch,lr,train_loss,train_accuracy,val_accuracy
std::string history_csv(const TrainHistory& history);

}  // namespace prunekit
