#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prunekit/data.hpp"
#include "prunekit/model.hpp"
#include "prunekit/pruning.hpp"

namespace prunekit {

struct SensitivityPoint {
  double fraction = 0.0;
  std::size_t pruned = 0;  // floor(fraction * filters)
  double accuracy = 0.0;
};

// Validation accuracy of a layer pruned in isolation, without retraining.
struct SensitivityCurve {
  std::string layer_id;
  std::size_t filters = 0;
  double baseline_accuracy = 0.0;
  std::vector<SensitivityPoint> points;
};

struct SweepOptions {
  std::size_t subsample = 0;  // 0: whole eval set
  std::uint64_t seed = 0;     // subsample draw
};

// {0, 0.1, ..., 0.9}
std::vector<double> default_fractions();
// "start:stop:step", inclusive of stop (within 1e-9).
std::vector<double> parse_fraction_range(std::string_view text);

// Evaluates a copy of the model with the floor(f * n) smallest-norm filters of
// the layer removed, for each fraction. The input model is never modified.
SensitivityCurve sweep_layer(const ModelGraph& model, std::string_view layer_id,
                             std::span<const double> fractions, const LabeledDataset& eval_set,
                             const SweepOptions& options = {});
// One curve per prunable layer, in chain order.
std::vector<SensitivityCurve> sweep_all(const ModelGraph& model, std::span<const double> fractions,
                                        const LabeledDataset& eval_set,
                                        const SweepOptions& options = {});

struct NormReport {
  std::vector<FilterNormProfile> profiles;       // ascending, one per prunable layer
  std::vector<std::vector<double>> normalized;   // profile / layer max (all zero if max is 0)
};
NormReport norm_report(const ModelGraph& model);

// Mean accuracy drop below baseline over the curve; smaller is flatter.
double curve_drop(const SensitivityCurve& curve);

// Sensitivity-guided schedule: every layer with floor(fraction * n) >= 1,
// flattest curve first (ties by chain order), each removing that many filters.
std::vector<PruneRequest> greedy_plan(const ModelGraph& model,
                                      std::span<const SensitivityCurve> curves, double fraction);

// layer_id,fraction,accuracy
std::string sensitivity_csv(std::span<const SensitivityCurve> curves);
// layer_id,rank,norm,norm_normalized
std::string norms_csv(const NormReport& report);

}  // namespace prunekit
