#include "prunekit/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "prunekit/errors.hpp"
#include "prunekit/metering.hpp"

namespace prunekit {
namespace {

constexpr double kAccuracySlack = 1e-12;

std::string millions(std::uint64_t v) { return format_fixed2(static_cast<double>(v) / 1e6); }

nlohmann::json phase_json(const PhaseRecord& p) {
  return {{"phase", p.phase},
          {"layer", p.step.layer_id},
          {"m", p.step.m},
          {"indices", p.step.indices},
          {"accuracy", p.accuracy},
          {"params", p.params},
          {"flops", p.flops},
          {"size_mb", format_fixed2(p.size_mb)}};
}

TrainConfig retrain_config(const TrainConfig& base, const PruneSessionConfig& session,
                           std::size_t phase) {
  TrainConfig cfg = base;
  cfg.epochs = session.retrain_epochs;
  cfg.lr = session.retrain_lr;
  cfg.decay_factor = 1.0;
  cfg.seed = base.seed * 7919ull + phase;
  return cfg;
}

}  // namespace

void PruneSessionConfig::validate() const {
  if (!(budget >= 0.0)) throw std::invalid_argument("accuracy-drop budget must be >= 0");
  if (retrain_epochs > 0 && !(retrain_lr > 0.0)) {
    throw std::invalid_argument("retrain learning rate must be > 0");
  }
}

std::string_view to_string(TerminalReason reason) {
  return reason == TerminalReason::PlanComplete ? "plan-complete" : "budget-exhausted";
}

std::uint64_t SessionLog::final_params() const {
  return phases.empty() ? baseline_params : phases.back().params;
}
std::uint64_t SessionLog::final_flops() const {
  return phases.empty() ? baseline_flops : phases.back().flops;
}
double SessionLog::final_size_mb() const {
  return phases.empty() ? baseline_size_mb : phases.back().size_mb;
}

SessionResult run_prune_session(const ModelGraph& model, const PrunePolicy& policy,
                                const LabeledDataset& train_set, const LabeledDataset& val_set,
                                const TrainConfig& train_config,
                                const PruneSessionConfig& session_config) {
  session_config.validate();
  SessionResult result{model, {}};
  SessionLog& log = result.log;
  log.budget = session_config.budget;
  log.baseline_accuracy = session_config.baseline_accuracy
                              ? *session_config.baseline_accuracy
                              : evaluate(model, val_set);
  const MeterReport base = meter(model);
  log.baseline_params = base.total_params;
  log.baseline_flops = base.total_flops;
  log.baseline_size_mb = base.size_mb();

  for (std::size_t phase = 1;; ++phase) {
    const std::optional<PruneRequest> request = policy(result.model, log);
    if (!request) {
      log.reason = TerminalReason::PlanComplete;
      break;
    }
    const auto t0 = std::chrono::steady_clock::now();
    PhaseRecord rec;
    rec.phase = phase;
    try {
      rec.step = resolve_step(result.model, *request);
    } catch (const PlanError& e) {
      throw PlanError("phase " + std::to_string(phase) + ": " + e.what());
    }
    ModelGraph candidate = prune_filters(result.model, rec.step);
    if (session_config.retrain_epochs > 0) {
      train(candidate, train_set, nullptr, retrain_config(train_config, session_config, phase));
    }
    rec.accuracy = evaluate(candidate, val_set);
    const MeterReport m = meter(candidate);
    rec.params = m.total_params;
    rec.flops = m.total_flops;
    rec.size_mb = m.size_mb();
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rec.accuracy + kAccuracySlack >= log.baseline_accuracy - log.budget) {
      result.model = std::move(candidate);
      log.phases.push_back(std::move(rec));
    } else {
      log.rejected = std::move(rec);
      log.reason = TerminalReason::BudgetExhausted;
      break;
    }
  }
  return result;
}

SessionResult run_prune_session(const ModelGraph& model, std::span<const PruneRequest> plan,
                                const LabeledDataset& train_set, const LabeledDataset& val_set,
                                const TrainConfig& train_config,
                                const PruneSessionConfig& session_config) {
  std::size_t next = 0;
  PrunePolicy policy = [&](const ModelGraph&, const SessionLog&) -> std::optional<PruneRequest> {
    if (next >= plan.size()) return std::nullopt;
    return plan[next++];
  };
  return run_prune_session(model, policy, train_set, val_set, train_config, session_config);
}

nlohmann::json session_log_json(const SessionLog& log) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : log.phases) phases.push_back(phase_json(p));
  nlohmann::json j = {{"baseline",
                       {{"accuracy", log.baseline_accuracy},
                        {"params", log.baseline_params},
                        {"flops", log.baseline_flops},
                        {"size_mb", format_fixed2(log.baseline_size_mb)}}},
                      {"budget", log.budget},
                      {"phases", phases},
                      {"rejected", log.rejected ? phase_json(*log.rejected) : nlohmann::json()},
                      {"terminal_reason", std::string(to_string(log.reason))},
                      {"final",
                       {{"params", log.final_params()},
                        {"flops", log.final_flops()},
                        {"size_mb", format_fixed2(log.final_size_mb())}}}};
  return j;
}

nlohmann::json session_timings_json(const SessionLog& log) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : log.phases) {
    j.push_back({{"phase", p.phase}, {"wall_seconds", p.wall_seconds}, {"committed", true}});
  }
  if (log.rejected) {
    j.push_back({{"phase", log.rejected->phase},
                 {"wall_seconds", log.rejected->wall_seconds},
                 {"committed", false}});
  }
  return j;
}

std::string session_summary_csv(const SessionLog& log, const std::string& label) {
  std::ostringstream os;
  os << "network,params_m,flops_m,size_mb\n";
  os << "Baseline," << millions(log.baseline_params) << ',' << millions(log.baseline_flops) << ','
     << format_fixed2(log.baseline_size_mb) << '\n';
  os << label << ',' << millions(log.final_params()) << ',' << millions(log.final_flops()) << ','
     << format_fixed2(log.final_size_mb()) << '\n';
  return os.str();
}

ModelGraph build_architecture(const std::string& arch, const BuildOptions& options) {
  if (arch == "vgg16") return build_vgg16_gap(options);
  if (arch == "mobilenetv1") return build_mobilenet_v1(options);
  throw std::invalid_argument("unknown architecture '" + arch + "' (vgg16 | mobilenetv1)");
}

namespace {

void finish_modality(ModalityResult& r, ModelGraph model, const LabeledDataset& train_set,
                     const LabeledDataset& val_set, const TrainConfig& train_cfg,
                     const CompareConfig& config) {
  r.baseline_accuracy = evaluate(model, val_set);
  r.curves = sweep_all(model, config.fractions, val_set,
                       {config.sensitivity_subsample, config.seed});
  r.plan = config.plan ? *config.plan : greedy_plan(model, r.curves, config.prune_fraction);
  PruneSessionConfig session = config.session;
  session.retrain_lr = r.history.lowest_lr;
  session.baseline_accuracy = r.baseline_accuracy;
  r.session = run_prune_session(model, r.plan, train_set, val_set, train_cfg, session);
}

}  // namespace

CompareResult compare_modalities(const LabeledDataset& source, const LabeledDataset& target,
                                 const CompareConfig& config) {
  if (source.sample_shape() != target.sample_shape()) {
    throw ShapeError("source samples " + shape_to_string(source.sample_shape()) +
                     " and target samples " + shape_to_string(target.sample_shape()) +
                     " have incompatible shapes");
  }
  const auto [target_train, target_val] = split(target, config.val_fraction, config.seed + 1);

  BuildOptions opts;
  opts.input_shape = target.sample_shape();
  opts.width = config.width;
  opts.batchnorm = config.batchnorm;

  CompareResult out;
  {
    opts.num_classes = source.num_classes;
    opts.seed = config.seed * 31 + 11;
    ModelGraph a = build_architecture(config.arch, opts);
    TrainConfig pre = config.pretrain;
    pre.seed = config.seed * 31 + 12;
    out.pretrain_history = train(a, source, nullptr, pre);
    replace_classifier(a, target.num_classes, config.seed * 31 + 13);
    TrainConfig ft = config.finetune;
    ft.seed = config.seed * 31 + 14;
    out.a.network = "A";
    out.a.history = train(a, target_train, &target_val, ft);
    finish_modality(out.a, std::move(a), target_train, target_val, ft, config);
  }
  {
    opts.num_classes = target.num_classes;
    opts.seed = config.seed * 31 + 21;
    ModelGraph b = build_architecture(config.arch, opts);
    TrainConfig sc = config.scratch;
    sc.seed = config.seed * 31 + 22;
    out.b.network = "B";
    out.b.history = train(b, target_train, &target_val, sc);
    finish_modality(out.b, std::move(b), target_train, target_val, sc, config);
  }
  return out;
}

std::string compare_csv(const CompareResult& result, const std::string& dataset_name) {
  std::ostringstream os;
  os << "dataset,network,params_m,flops_m,size_mb\n";
  for (const ModalityResult* r : {&result.a, &result.b}) {
    const SessionLog& log = r->session.log;
    os << dataset_name << ',' << r->network << "-pruned," << millions(log.final_params()) << ','
       << millions(log.final_flops()) << ',' << format_fixed2(log.final_size_mb()) << '\n';
  }
  return os.str();
}

nlohmann::json compare_json(const CompareResult& result, const std::string& dataset_name) {
  auto modality = [](const ModalityResult& r) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : r.curves) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : c.points) pts.push_back({p.fraction, p.pruned, p.accuracy});
      curves.push_back({{"layer", c.layer_id}, {"baseline", c.baseline_accuracy}, {"points", pts}});
    }
    return nlohmann::json{{"network", r.network},
                          {"baseline_accuracy", r.baseline_accuracy},
                          {"lowest_lr", r.history.lowest_lr},
                          {"plan", plan_requests_json(r.plan)},
                          {"sensitivity", curves},
                          {"session", session_log_json(r.session.log)}};
  };
  const std::uint64_t pa = result.a.session.log.final_params();
  const std::uint64_t pb = result.b.session.log.final_params();
  return {{"dataset", dataset_name},
          {"A", modality(result.a)},
          {"B", modality(result.b)},
          {"observation",
           {{"a_final_params", pa},
            {"b_final_params", pb},
            {"a_prunes_further", pa < pb},
            {"note", "directional comparison only; not a pass/fail criterion"}}}};
}

}  // namespace prunekit
