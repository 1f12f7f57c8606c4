#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prunekit/data.hpp"
#include "prunekit/model.hpp"
#include "prunekit/pruning.hpp"
#include "prunekit/sensitivity.hpp"
#include "prunekit/trainer.hpp"

namespace prunekit {

struct PruneSessionConfig {
  std::size_t retrain_epochs = 5;
  double retrain_lr = 1e-5;  // lowest rate reached during baseline training
  double budget = 0.01;      // absolute accuracy drop allowed below baseline
  // Measured on the validation set when absent.
  std::optional<double> baseline_accuracy;

  void validate() const;
};

enum class TerminalReason { PlanComplete, BudgetExhausted };
std::string_view to_string(TerminalReason reason);

struct PhaseRecord {
  std::size_t phase = 0;  // 1-based
  PruningStep step;
  double accuracy = 0.0;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  double size_mb = 0.0;
  double wall_seconds = 0.0;  // not serialized; see session_timings_json
};

struct SessionLog {
  double baseline_accuracy = 0.0;
  double budget = 0.0;
  std::uint64_t baseline_params = 0;
  std::uint64_t baseline_flops = 0;
  double baseline_size_mb = 0.0;
  std::vector<PhaseRecord> phases;      // committed phases only
  std::optional<PhaseRecord> rejected;  // the phase rolled back, if any
  TerminalReason reason = TerminalReason::PlanComplete;

  std::uint64_t final_params() const;
  std::uint64_t final_flops() const;
  double final_size_mb() const;
};

struct SessionResult {
  ModelGraph model;
  SessionLog log;
};

// Supplies the next request given the current committed model, or nullopt to stop.
using PrunePolicy =
    std::function<std::optional<PruneRequest>(const ModelGraph& model, const SessionLog& log)>;

// Per phase: resolve the next step on the committed model, apply it, retrain
// `retrain_epochs` at the session rate, evaluate. The phase is committed when
// accuracy >= baseline - budget; otherwise the model rolls back to the last
// committed state and the session ends with BudgetExhausted.
SessionResult run_prune_session(const ModelGraph& model, const PrunePolicy& policy,
                                const LabeledDataset& train_set, const LabeledDataset& val_set,
                                const TrainConfig& train_config,
                                const PruneSessionConfig& session_config);
SessionResult run_prune_session(const ModelGraph& model, std::span<const PruneRequest> plan,
                                const LabeledDataset& train_set, const LabeledDataset& val_set,
                                const TrainConfig& train_config,
                                const PruneSessionConfig& session_config);

// Deterministic JSON (no wall-clock values) and per-phase timings kept apart.
nlohmann::json session_log_json(const SessionLog& log);
nlohmann::json session_timings_json(const SessionLog& log);
// network,params_m,flops_m,size_mb with a Baseline row and one `label` row.
std::string session_summary_csv(const SessionLog& log, const std::string& label);

// Fine-tuned (A) vs from-scratch (B) experiment.
struct CompareConfig {
  std::string arch = "vgg16";  // vgg16 | mobilenetv1
  double width = 0.25;
  bool batchnorm = false;  // VGG only
  TrainConfig pretrain;    // Network-A on the source set
  TrainConfig finetune;    // Network-A on the target set
  TrainConfig scratch;     // Network-B on the target set
  PruneSessionConfig session;  // retrain_lr is replaced by each network's lowest LR
  double val_fraction = 0.1;
  double prune_fraction = 0.5;  // greedy policy: share of filters per layer
  std::vector<double> fractions = default_fractions();
  std::size_t sensitivity_subsample = 0;
  // Explicit plan applied to both networks instead of the greedy policy.
  std::optional<std::vector<PruneRequest>> plan;
  std::uint64_t seed = 0;
  std::string dataset_name = "target";
};

struct ModalityResult {
  std::string network;  // "A" or "B"
  TrainHistory history;
  double baseline_accuracy = 0.0;
  std::vector<SensitivityCurve> curves;
  std::vector<PruneRequest> plan;
  SessionResult session;
};

struct CompareResult {
  ModalityResult a;
  ModalityResult b;
  TrainHistory pretrain_history;
};

ModelGraph build_architecture(const std::string& arch, const BuildOptions& options);

// Source and target must share the sample shape; the classifier head of
// Network-A is always replaced for the target class count.
CompareResult compare_modalities(const LabeledDataset& source, const LabeledDataset& target,
                                 const CompareConfig& config);

// dataset,network,params_m,flops_m,size_mb; exactly rows A-pruned and B-pruned.
std::string compare_csv(const CompareResult& result, const std::string& dataset_name);
nlohmann::json compare_json(const CompareResult& result, const std::string& dataset_name);

}  // namespace prunekit
