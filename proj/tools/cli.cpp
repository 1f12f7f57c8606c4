#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "prunekit/checkpoint.hpp"
#include "prunekit/data.hpp"
#include "prunekit/errors.hpp"
#include "prunekit/manifest.hpp"
#include "prunekit/metering.hpp"
#include "prunekit/model.hpp"
#include "prunekit/pipeline.hpp"
#include "prunekit/pruning.hpp"
#include "prunekit/sensitivity.hpp"
#include "prunekit/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace prunekit::cli {

std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : component) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed + h + 0x9e3779b97f4a7c15ULL;  // splitmix64 finalizer
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string now_utc() { return utc_timestamp(std::chrono::system_clock::now()); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// "model.pkpt" -> "model.<suffix>" in the same directory.
fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  return p.replace_extension(suffix);
}

Shape parse_chw(const std::string& text) {
  Shape s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(part, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != part.size() || v == 0) {
      throw CLI::ValidationError("--input", "expected CxHxW, got '" + text + "'");
    }
    s.push_back(v);
  }
  if (s.size() != 3) throw CLI::ValidationError("--input", "expected CxHxW, got '" + text + "'");
  return s;
}

std::string shape_flag(const Shape& s) {
  return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

std::string number_text(double v) { return json(v).dump(); }

const CLI::Validator kChw(
    [](std::string& text) -> std::string {
      try {
        parse_chw(text);
      } catch (const CLI::ValidationError&) {
        return "expected CxHxW, got '" + text + "'";
      }
      return {};
    },
    "CxHxW", "chw");

const std::vector<std::string> kArchs{"vgg16", "mobilenetv1"};
const std::vector<std::string> kFormats{"auto", "idx", "cifar10", "raw"};

// How a training set is read and split; recorded in checkpoint metadata so
// later commands rebuild the same validation split.
struct DataSpec {
  std::string dir;
  std::string format = "auto";
  std::size_t limit = 0;
  std::string input;  // CxHxW, empty: as stored
  double val_fraction = 0.1;
  bool standardize = false;  // per-channel, statistics from the training split
};

struct PreparedData {
  DataFormat format = DataFormat::Idx;
  std::vector<fs::path> files;
  LabeledDataset train;
  LabeledDataset val;
};

DataFormat resolve_format(const std::string& dir, const std::string& format) {
  return format == "auto" ? detect_data_format(dir) : data_format_from_string(format);
}

std::string format_name(DataFormat f) {
  switch (f) {
    case DataFormat::Idx: return "idx";
    case DataFormat::Cifar10: return "cifar10";
    case DataFormat::Raw: return "raw";
  }
  return "?";
}

LabeledDataset load_limited(const std::string& dir, DataFormat format, std::size_t limit,
                            const std::string& input, std::uint64_t limit_seed) {
  if (!fs::is_directory(dir)) throw FormatError("data directory '" + dir + "' does not exist");
  LabeledDataset ds = load_dataset(dir, format, Split::Train);
  if (limit > 0) ds = subsample(ds, limit, limit_seed);
  if (!input.empty()) ds = adapt_to_shape(ds, parse_chw(input));
  return ds;
}

PreparedData prepare_data(const DataSpec& spec, std::uint64_t seed) {
  PreparedData p;
  p.format = resolve_format(spec.dir, spec.format);
  p.files = dataset_files(spec.dir, p.format, Split::Train);
  LabeledDataset ds =
      load_limited(spec.dir, p.format, spec.limit, spec.input, derive_seed(seed, "limit"));
  auto [tr, va] = split(ds, spec.val_fraction, derive_seed(seed, "split"));
  p.train = std::move(tr);
  p.val = std::move(va);
  if (spec.standardize) {
    standardize_per_channel(p.val, p.train);
    standardize_per_channel(p.train, p.train);
  }
  return p;
}

void record_data(RunManifest& m, const PreparedData& p) {
  for (const auto& f : p.files) m.add_input(f);
}

json data_config(const DataSpec& spec, DataFormat format) {
  return {{"dir", spec.dir},
          {"format", format_name(format)},
          {"limit", spec.limit},
          {"input", spec.input},
          {"val_fraction", spec.val_fraction},
          {"standardize", spec.standardize}};
}

std::string meta_or(const ModelGraph& m, const std::string& key, const std::string& fallback) {
  auto it = m.meta.find(key);
  return it == m.meta.end() ? fallback : it->second;
}

// Flags left unset fall back to the values the checkpoint was trained with.
struct DataOverrides {
  std::string dir;
  std::optional<std::string> format;
  std::optional<std::size_t> limit;
  std::optional<std::string> input;
  std::optional<double> val_fraction;
  std::optional<std::uint64_t> seed;
};

void add_data_overrides(CLI::App* cmd, DataOverrides& o) {
  cmd->add_option("--data", o.dir, "Dataset directory (training split is used)")->required();
  cmd->add_option("--format", o.format, "idx | cifar10 | raw | auto")->check(CLI::IsMember(kFormats));
  cmd->add_option("--limit", o.limit, "Subsample size used at training time");
  cmd->add_option("--input", o.input, "CxHxW the images were adapted to")->check(kChw);
  cmd->add_option("--val-fraction", o.val_fraction, "Validation share")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--seed", o.seed, "Seed (default: the checkpoint's training seed)");
}

std::pair<DataSpec, std::uint64_t> resolve_overrides(const DataOverrides& o, const ModelGraph& m) {
  DataSpec spec;
  spec.dir = o.dir;
  spec.format = o.format.value_or(meta_or(m, "data.format", "auto"));
  spec.limit = o.limit.value_or(std::stoull(meta_or(m, "data.limit", "0")));
  spec.input = o.input.value_or(meta_or(m, "data.input", ""));
  spec.val_fraction = o.val_fraction.value_or(std::stod(meta_or(m, "data.val_fraction", "0.1")));
  spec.standardize = meta_or(m, "data.standardize", "false") == "true";
  std::uint64_t seed = o.seed.value_or(std::stoull(meta_or(m, "seed", "0")));
  return {spec, seed};
}

struct TrainFlags {
  std::size_t epochs = 1;
  double lr = 0.001;
  std::size_t decay_every = 40;
  double decay_factor = 0.1;
  std::size_t batch_size = 64;
  bool hflip = false;
};

void add_schedule_flags(CLI::App* cmd, TrainFlags& t) {
  cmd->add_option("--lr", t.lr, "Initial Adam learning rate")->capture_default_str();
  cmd->add_option("--decay-every", t.decay_every, "Epochs per step decay")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--decay-factor", t.decay_factor, "Multiplier applied at each decay")
      ->capture_default_str();
  cmd->add_option("--batch-size", t.batch_size, "Mini-batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--hflip", t.hflip, "Random horizontal flips during training");
}

TrainConfig to_config(const TrainFlags& t, std::size_t epochs, std::uint64_t seed) {
  TrainConfig c;
  c.lr = t.lr;
  c.decay_every = t.decay_every;
  c.decay_factor = t.decay_factor;
  c.batch_size = t.batch_size;
  c.hflip = t.hflip;
  c.epochs = epochs;
  c.seed = seed;
  return c;
}

json train_config_json(const TrainConfig& c) {
  return {{"lr", c.lr},         {"decay_every", c.decay_every}, {"decay_factor", c.decay_factor},
          {"epochs", c.epochs}, {"batch_size", c.batch_size},   {"hflip", c.hflip},
          {"seed", c.seed}};
}

void log_history(std::ostream& err, const std::string& tag, const TrainHistory& h) {
  for (const auto& e : h.epochs) {
    err << '[' << tag << "] epoch " << e.epoch + 1 << " lr " << e.lr << " loss " << e.train_loss
        << " train_acc " << e.train_accuracy;
    if (e.val_accuracy) err << " val_acc " << *e.val_accuracy;
    err << '\n';
  }
}

json phase_timings(const SessionLog& log, const std::string& network = {}) {
  json t = session_timings_json(log);
  if (!network.empty()) {
    for (auto& row : t) row["network"] = network;
  }
  return t;
}

// Fails fast on plans that cannot apply to the model, naming the step.
void check_plan(const ModelGraph& model, const std::vector<PruneRequest>& plan) {
  ModelGraph m = model;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    try {
      m = prune_filters(m, resolve_step(m, plan[i]));
    } catch (const PlanError& e) {
      throw PlanError("plan step " + std::to_string(i + 1) + " (layer '" + plan[i].layer_id +
                      "'): " + e.what());
    }
  }
}

std::vector<PruneRequest> read_plan(const fs::path& path) {
  std::string text = read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw PlanError("plan file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_plan_json(j);
}

// --- commands --------------------------------------------------------------

struct TrainArgs {
  std::string arch;
  double width = 0.25;
  bool batchnorm = false;
  DataSpec data;
  TrainFlags train;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream&,
              std::ostream& err) {
  RunManifest man;
  man.command = "train";
  man.argv = argv;
  man.started_utc = now_utc();
  const auto t0 = Clock::now();

  PreparedData d = prepare_data(a.data, a.seed);
  record_data(man, d);

  BuildOptions opts;
  opts.input_shape = d.train.sample_shape();
  opts.num_classes = d.train.num_classes;
  opts.width = a.width;
  opts.batchnorm = a.batchnorm;
  opts.seed = derive_seed(a.seed, "init");
  ModelGraph model = build_architecture(a.arch, opts);

  TrainConfig cfg = to_config(a.train, a.train.epochs, derive_seed(a.seed, "train"));
  TrainHistory h = train(model, d.train, &d.val, cfg);
  log_history(err, "train", h);

  model.meta["arch"] = a.arch;
  model.meta["width"] = number_text(a.width);
  model.meta["batchnorm"] = a.batchnorm ? "true" : "false";
  model.meta["seed"] = std::to_string(a.seed);
  model.meta["lowest_lr"] = number_text(h.lowest_lr);
  model.meta["data.format"] = format_name(d.format);
  model.meta["data.limit"] = std::to_string(a.data.limit);
  model.meta["data.input"] = a.data.input;
  model.meta["data.val_fraction"] = number_text(a.data.val_fraction);
  model.meta["data.standardize"] = a.data.standardize ? "true" : "false";

  const fs::path out = a.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(model, out);
  write_text(sibling(out, ".history.csv"), history_csv(h));

  man.config = {{"arch", a.arch},
                {"width", a.width},
                {"batchnorm", a.batchnorm},
                {"data", data_config(a.data, d.format)},
                {"train", train_config_json(cfg)},
                {"out", a.out}};
  man.seeds = {{"seed", a.seed},
               {"limit", derive_seed(a.seed, "limit")},
               {"split", derive_seed(a.seed, "split")},
               {"init", opts.seed},
               {"train", cfg.seed}};
  man.add_output(out);
  man.add_output(sibling(out, ".history.csv"));
  man.timings = json::array({{{"stage", "train"}, {"wall_seconds", seconds_since(t0)}}});
  man.finished_utc = now_utc();
  man.write(sibling(out, ".manifest.json"));
  err << "[train] wrote " << out.string() << '\n';
  return kExitOk;
}

struct SensitivityArgs {
  std::string model;
  DataOverrides data;
  std::string fractions = "0:0.9:0.1";
  std::string out_dir = ".";
  std::size_t subsample = 0;
};

int cmd_sensitivity(const SensitivityArgs& a, const std::vector<std::string>& argv, std::ostream&,
                    std::ostream& err) {
  RunManifest man;
  man.command = "sensitivity";
  man.argv = argv;
  man.started_utc = now_utc();
  const auto t0 = Clock::now();

  const std::vector<double> fractions = parse_fraction_range(a.fractions);
  ModelGraph model = load_checkpoint(a.model);
  man.add_input(a.model);
  auto [spec, seed] = resolve_overrides(a.data, model);
  PreparedData d = prepare_data(spec, seed);
  record_data(man, d);

  const SweepOptions sweep{a.subsample, derive_seed(seed, "sensitivity")};
  auto curves = sweep_all(model, fractions, d.val, sweep);
  const fs::path dir = a.out_dir;
  write_text(dir / "sensitivity.csv", sensitivity_csv(curves));
  write_text(dir / "norms.csv", norms_csv(norm_report(model)));

  man.config = {{"model", a.model},
                {"data", data_config(spec, d.format)},
                {"fractions", fractions},
                {"subsample", a.subsample},
                {"out_dir", a.out_dir}};
  man.seeds = {{"seed", seed},
               {"limit", derive_seed(seed, "limit")},
               {"split", derive_seed(seed, "split")},
               {"sensitivity", sweep.seed}};
  man.add_output(dir / "sensitivity.csv");
  man.add_output(dir / "norms.csv");
  man.timings = json::array({{{"stage", "sweep"}, {"wall_seconds", seconds_since(t0)}}});
  man.finished_utc = now_utc();
  man.write(dir / "manifest.json");
  err << "[sensitivity] " << curves.size() << " layers swept on " << d.val.size() << " samples\n";
  return kExitOk;
}

struct PruneArgs {
  std::string model;
  std::string plan;
  std::optional<double> greedy;
  std::string fractions = "0:0.9:0.1";
  std::size_t subsample = 0;
  DataOverrides data;
  std::size_t retrain_epochs = 5;
  double budget = 0.01;
  std::optional<double> lr;
  TrainFlags train;
  std::string out;
  std::string label = "Pruned";
};

int cmd_prune(const PruneArgs& a, const std::vector<std::string>& argv, std::ostream&,
              std::ostream& err) {
  RunManifest man;
  man.command = "prune";
  man.argv = argv;
  man.started_utc = now_utc();
  const auto t0 = Clock::now();

  ModelGraph model = load_checkpoint(a.model);
  man.add_input(a.model);

  std::vector<PruneRequest> plan;
  if (!a.plan.empty()) {
    plan = read_plan(a.plan);
    man.add_input(a.plan);
    check_plan(model, plan);
  }

  auto [spec, seed] = resolve_overrides(a.data, model);
  PreparedData d = prepare_data(spec, seed);
  record_data(man, d);

  const std::uint64_t sweep_seed = derive_seed(seed, "sensitivity");
  if (a.greedy) {
    const std::vector<double> fractions = parse_fraction_range(a.fractions);
    auto curves = sweep_all(model, fractions, d.val, {a.subsample, sweep_seed});
    plan = greedy_plan(model, curves, *a.greedy);
  }

  PruneSessionConfig sc;
  sc.retrain_epochs = a.retrain_epochs;
  sc.budget = a.budget;
  sc.retrain_lr = a.lr.value_or(std::stod(meta_or(model, "lowest_lr", "1e-5")));
  const TrainConfig base = to_config(a.train, a.retrain_epochs, derive_seed(seed, "retrain"));
  SessionResult r = run_prune_session(model, plan, d.train, d.val, base, sc);

  for (const auto& p : r.log.phases) {
    err << "[prune] phase " << p.phase << ' ' << p.step.layer_id << " -" << p.step.m << " acc "
        << p.accuracy << " params " << p.params << '\n';
  }
  if (r.log.rejected) {
    err << "[prune] phase " << r.log.rejected->phase << ' ' << r.log.rejected->step.layer_id
        << " rejected (acc " << r.log.rejected->accuracy << ")\n";
  }

  const fs::path out = a.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_checkpoint(r.model, out);
  write_text(sibling(out, ".log.json"), session_log_json(r.log).dump(2) + "\n");
  write_text(sibling(out, ".summary.csv"), session_summary_csv(r.log, a.label));
  write_text(sibling(out, ".plan.json"), plan_requests_json(plan).dump(2) + "\n");

  man.config = {{"model", a.model},
                {"plan", a.plan},
                {"greedy", a.greedy ? json(*a.greedy) : json(nullptr)},
                {"subsample", a.subsample},
                {"data", data_config(spec, d.format)},
                {"retrain_epochs", sc.retrain_epochs},
                {"retrain_lr", sc.retrain_lr},
                {"budget", sc.budget},
                {"train", train_config_json(base)},
                {"label", a.label},
                {"out", a.out}};
  man.seeds = {{"seed", seed},
               {"limit", derive_seed(seed, "limit")},
               {"split", derive_seed(seed, "split")},
               {"sensitivity", sweep_seed},
               {"retrain", base.seed}};
  for (const char* s : {".pkpt", ".log.json", ".summary.csv", ".plan.json"}) {
    man.add_output(std::string(s) == ".pkpt" ? out : sibling(out, s));
  }
  man.timings = phase_timings(r.log);
  man.timings.push_back({{"stage", "total"}, {"wall_seconds", seconds_since(t0)}});
  man.finished_utc = now_utc();
  man.write(sibling(out, ".manifest.json"));
  err << "[prune] " << to_string(r.log.reason) << ", wrote " << out.string() << '\n';
  return kExitOk;
}

struct ReportArgs {
  std::string model;
  std::string arch;
  std::size_t classes = 10;
  std::string input = "3x32x32";
  double width = 1.0;
  bool batchnorm = false;
  bool as_json = false;
  std::string out;
};

int cmd_report(const ReportArgs& a, const std::vector<std::string>& argv, std::ostream& out,
               std::ostream&) {
  RunManifest man;
  man.command = "report";
  man.argv = argv;
  man.started_utc = now_utc();

  ModelGraph model;
  if (!a.model.empty()) {
    model = load_checkpoint(a.model);
    man.add_input(a.model);
  } else {
    BuildOptions opts;
    opts.input_shape = parse_chw(a.input);
    opts.num_classes = a.classes;
    opts.width = a.width;
    opts.batchnorm = a.batchnorm;
    model = build_architecture(a.arch, opts);
  }
  const MeterReport report = meter(model);
  const std::string text = a.as_json ? meter_json(report).dump(2) + "\n" : meter_csv(report);
  if (a.out.empty()) {
    out << text;
    return kExitOk;
  }
  write_text(a.out, text);
  man.config = {{"model", a.model}, {"json", a.as_json}, {"out", a.out}};
  if (a.model.empty()) {
    man.config["arch"] = a.arch;
    man.config["classes"] = a.classes;
    man.config["input"] = a.input;
    man.config["width"] = a.width;
    man.config["batchnorm"] = a.batchnorm;
  }
  man.add_output(a.out);
  man.finished_utc = now_utc();
  man.write(sibling(a.out, ".manifest.json"));
  return kExitOk;
}

struct CompareArgs {
  std::string source, target;
  std::string source_format = "auto", target_format = "auto";
  std::size_t source_limit = 0, target_limit = 0;
  std::string input;
  std::string arch = "vgg16";
  double width = 0.25;
  bool batchnorm = false;
  std::size_t pretrain_epochs = 10, finetune_epochs = 10, scratch_epochs = 10;
  TrainFlags train;
  std::size_t retrain_epochs = 5;
  double budget = 0.01;
  double val_fraction = 0.1;
  double prune_fraction = 0.5;
  std::string fractions = "0:0.9:0.1";
  std::size_t subsample = 0;
  std::string plan;
  std::string dataset_name;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv, std::ostream&,
                std::ostream& err) {
  RunManifest man;
  man.command = "compare";
  man.argv = argv;
  man.started_utc = now_utc();
  const auto t0 = Clock::now();

  const DataFormat sf = resolve_format(a.source, a.source_format);
  const DataFormat tf = resolve_format(a.target, a.target_format);
  for (const auto& f : dataset_files(a.source, sf, Split::Train)) man.add_input(f);
  for (const auto& f : dataset_files(a.target, tf, Split::Train)) man.add_input(f);

  LabeledDataset target =
      load_limited(a.target, tf, a.target_limit, a.input, derive_seed(a.seed, "target-limit"));
  const std::string input = a.input.empty() ? shape_flag(target.sample_shape()) : a.input;
  LabeledDataset source =
      load_limited(a.source, sf, a.source_limit, input, derive_seed(a.seed, "source-limit"));

  CompareConfig cfg;
  cfg.arch = a.arch;
  cfg.width = a.width;
  cfg.batchnorm = a.batchnorm;
  cfg.pretrain = to_config(a.train, a.pretrain_epochs, 0);
  cfg.finetune = to_config(a.train, a.finetune_epochs, 0);
  cfg.scratch = to_config(a.train, a.scratch_epochs, 0);
  cfg.session.retrain_epochs = a.retrain_epochs;
  cfg.session.budget = a.budget;
  cfg.val_fraction = a.val_fraction;
  cfg.prune_fraction = a.prune_fraction;
  cfg.fractions = parse_fraction_range(a.fractions);
  cfg.sensitivity_subsample = a.subsample;
  if (!a.plan.empty()) {
    cfg.plan = read_plan(a.plan);
    man.add_input(a.plan);
  }
  cfg.seed = a.seed;
  cfg.dataset_name =
      a.dataset_name.empty() ? fs::path(a.target).lexically_normal().filename().string()
                             : a.dataset_name;
  if (cfg.dataset_name.empty()) cfg.dataset_name = "target";

  err << "[compare] source " << source.size() << " samples, target " << target.size()
      << " samples, input " << input << '\n';
  CompareResult r = compare_modalities(source, target, cfg);
  log_history(err, "pretrain", r.pretrain_history);
  log_history(err, "A", r.a.history);
  log_history(err, "B", r.b.history);

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  write_text(dir / "compare.csv", compare_csv(r, cfg.dataset_name));
  write_text(dir / "compare.json", compare_json(r, cfg.dataset_name).dump(2) + "\n");
  write_text(dir / "pretrain.history.csv", history_csv(r.pretrain_history));
  man.add_output(dir / "compare.csv");
  man.add_output(dir / "compare.json");
  man.add_output(dir / "pretrain.history.csv");
  man.timings = json::array();
  for (const ModalityResult* m : {&r.a, &r.b}) {
    const std::string n = m->network;
    save_checkpoint(m->session.model, dir / (n + ".pkpt"));
    write_text(dir / (n + ".log.json"), session_log_json(m->session.log).dump(2) + "\n");
    write_text(dir / (n + ".history.csv"), history_csv(m->history));
    for (const char* s : {".pkpt", ".log.json", ".history.csv"}) man.add_output(dir / (n + s));
    for (auto& row : phase_timings(m->session.log, n)) man.timings.push_back(row);
    err << "[compare] " << n << ": baseline " << m->baseline_accuracy << ", "
        << m->session.log.phases.size() << " phases committed, final params "
        << m->session.log.final_params() << '\n';
  }
  man.timings.push_back({{"stage", "total"}, {"wall_seconds", seconds_since(t0)}});

  man.config = {{"source", {{"dir", a.source}, {"format", format_name(sf)}, {"limit", a.source_limit}}},
                {"target", {{"dir", a.target}, {"format", format_name(tf)}, {"limit", a.target_limit}}},
                {"input", input},
                {"arch", a.arch},
                {"width", a.width},
                {"batchnorm", a.batchnorm},
                {"pretrain", train_config_json(cfg.pretrain)},
                {"finetune", train_config_json(cfg.finetune)},
                {"scratch", train_config_json(cfg.scratch)},
                {"retrain_epochs", a.retrain_epochs},
                {"budget", a.budget},
                {"val_fraction", a.val_fraction},
                {"prune_fraction", a.prune_fraction},
                {"fractions", cfg.fractions},
                {"subsample", a.subsample},
                {"plan", a.plan},
                {"dataset_name", cfg.dataset_name},
                {"out_dir", a.out_dir}};
  man.seeds = {{"seed", a.seed},
               {"source_limit", derive_seed(a.seed, "source-limit")},
               {"target_limit", derive_seed(a.seed, "target-limit")},
               {"target_split", a.seed + 1},
               {"a_init", a.seed * 31 + 11},
               {"a_pretrain", a.seed * 31 + 12},
               {"a_head", a.seed * 31 + 13},
               {"a_finetune", a.seed * 31 + 14},
               {"b_init", a.seed * 31 + 21},
               {"b_train", a.seed * 31 + 22}};
  man.finished_utc = now_utc();
  man.write(dir / "manifest.json");
  err << "[compare] wrote " << (dir / "compare.csv").string() << '\n';
  return kExitOk;
}

struct SynthArgs {
  std::string kind;
  std::string out;
  std::size_t count = 2000;
  std::size_t test_count = 500;
  std::size_t classes = 10;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv, std::ostream&,
              std::ostream& err) {
  RunManifest man;
  man.command = "synth-data";
  man.argv = argv;
  man.started_utc = now_utc();
  const fs::path dir = a.out;
  fs::create_directories(dir);

  const Shape chw = a.kind == "mnist" ? Shape{1, 28, 28} : Shape{3, 32, 32};
  const std::uint64_t train_seed = derive_seed(a.seed, a.kind + "-train");
  const std::uint64_t test_seed = derive_seed(a.seed, a.kind + "-test");
  LabeledDataset tr = make_pattern_dataset(a.count, chw, a.classes, train_seed);
  LabeledDataset te = make_pattern_dataset(a.test_count, chw, a.classes, test_seed);
  if (a.kind == "mnist") {
    write_idx(tr, dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    write_idx(te, dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  } else {
    const std::size_t per = (a.count + 4) / 5;
    for (std::size_t b = 0; b < 5; ++b) {
      std::vector<std::size_t> idx;
      for (std::size_t i = b * per; i < std::min(a.count, (b + 1) * per); ++i) idx.push_back(i);
      write_cifar10_file(subset(tr, idx), dir / ("data_batch_" + std::to_string(b + 1) + ".bin"));
    }
    write_cifar10_file(te, dir / "test_batch.bin");
  }
  const DataFormat f = a.kind == "mnist" ? DataFormat::Idx : DataFormat::Cifar10;
  for (Split s : {Split::Train, Split::Test}) {
    for (const auto& p : dataset_files(dir, f, s)) man.add_output(p);
  }
  man.config = {{"kind", a.kind},
                {"out", a.out},
                {"count", a.count},
                {"test_count", a.test_count},
                {"classes", a.classes}};
  man.seeds = {{"seed", a.seed}, {"train", train_seed}, {"test", test_seed}};
  man.finished_utc = now_utc();
  man.write(dir / "manifest.json");
  err << "[synth-data] wrote " << a.count << " + " << a.test_count << ' ' << a.kind
      << " surrogate samples to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"prunekit: filter pruning of CNNs with sensitivity analysis"};
  app.name(args.empty() ? "prunekit" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tool_version()));

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a network and write a checkpoint");
  train_cmd->add_option("--arch", ta.arch, "vgg16 | mobilenetv1")
      ->required()
      ->check(CLI::IsMember(kArchs));
  train_cmd->add_option("--width", ta.width, "Channel multiplier in (0, 1]")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  train_cmd->add_flag("--batchnorm", ta.batchnorm, "BatchNorm after every VGG conv");
  train_cmd->add_option("--data", ta.data.dir, "Dataset directory")->required();
  train_cmd->add_option("--format", ta.data.format, "idx | cifar10 | raw | auto")
      ->check(CLI::IsMember(kFormats))
      ->capture_default_str();
  train_cmd->add_option("--limit", ta.data.limit, "Seeded subsample of the training split (0: all)");
  train_cmd->add_option("--input", ta.data.input, "Adapt images to CxHxW (replicate channels, pad)")
      ->check(kChw);
  train_cmd->add_option("--val-fraction", ta.data.val_fraction, "Validation share")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  train_cmd->add_flag("--standardize", ta.data.standardize,
                      "Per-channel standardization with training-split statistics");
  train_cmd->add_option("--epochs", ta.train.epochs, "Training epochs")->capture_default_str();
  add_schedule_flags(train_cmd, ta.train);
  train_cmd->add_option("--seed", ta.seed, "Seed for every random component")->capture_default_str();
  train_cmd->add_option("--out", ta.out, "Checkpoint path (.pkpt)")->required();

  SensitivityArgs sa;
  auto* sens_cmd = app.add_subcommand("sensitivity", "Per-layer pruning sensitivity sweep");
  sens_cmd->add_option("--model", sa.model, "Checkpoint")->required();
  add_data_overrides(sens_cmd, sa.data);
  sens_cmd->add_option("--fractions", sa.fractions, "start:stop:step")->capture_default_str();
  sens_cmd->add_option("--subsample", sa.subsample, "Validation samples per evaluation (0: all)");
  sens_cmd->add_option("--out-dir", sa.out_dir, "Directory for the CSVs")->capture_default_str();

  PruneArgs pa;
  auto* prune_cmd = app.add_subcommand("prune", "Prune-retrain session under an accuracy budget");
  prune_cmd->add_option("--model", pa.model, "Checkpoint")->required();
  auto* plan_opt = prune_cmd->add_option("--plan", pa.plan, "Plan JSON file");
  auto* greedy_opt =
      prune_cmd->add_option("--greedy", pa.greedy, "Sensitivity-guided plan removing this share")
          ->check(CLI::Range(0.0, 1.0));
  plan_opt->excludes(greedy_opt);
  prune_cmd->add_option("--fractions", pa.fractions, "Sweep fractions for --greedy");
  prune_cmd->add_option("--subsample", pa.subsample, "Sweep samples for --greedy (0: all)");
  add_data_overrides(prune_cmd, pa.data);
  prune_cmd->add_option("--retrain-epochs", pa.retrain_epochs, "Epochs per phase")
      ->capture_default_str();
  prune_cmd->add_option("--budget", pa.budget, "Allowed accuracy drop")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  prune_cmd->add_option("--lr", pa.lr, "Retraining rate (default: checkpoint's lowest rate)");
  prune_cmd->add_option("--batch-size", pa.train.batch_size, "Mini-batch size")
      ->check(CLI::PositiveNumber);
  prune_cmd->add_flag("--hflip", pa.train.hflip, "Random horizontal flips during retraining");
  prune_cmd->add_option("--out", pa.out, "Output checkpoint")->required();
  prune_cmd->add_option("--label", pa.label, "Row label of the summary CSV")->capture_default_str();

  ReportArgs ra;
  auto* report_cmd = app.add_subcommand("report", "Per-layer parameter and FLOP report");
  auto* model_opt = report_cmd->add_option("--model", ra.model, "Checkpoint");
  auto* arch_opt =
      report_cmd->add_option("--arch", ra.arch, "Report a freshly built architecture instead")
          ->check(CLI::IsMember(kArchs));
  model_opt->excludes(arch_opt);
  report_cmd->add_option("--classes", ra.classes, "Classes (with --arch)")->capture_default_str();
  report_cmd->add_option("--input", ra.input, "CxHxW (with --arch)")->check(kChw)->capture_default_str();
  report_cmd->add_option("--width", ra.width, "Channel multiplier (with --arch)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  report_cmd->add_flag("--batchnorm", ra.batchnorm, "VGG with BatchNorm (with --arch)");
  report_cmd->add_flag("--json", ra.as_json, "JSON instead of CSV");
  report_cmd->add_option("--out", ra.out, "Output file (default: stdout)");

  CompareArgs ca;
  auto* cmp = app.add_subcommand("compare", "Fine-tuned (A) vs from-scratch (B) pruning comparison");
  cmp->add_option("--source", ca.source, "Source dataset directory (Network-A pretraining)")
      ->required();
  cmp->add_option("--target", ca.target, "Target dataset directory")->required();
  cmp->add_option("--source-format", ca.source_format)->check(CLI::IsMember(kFormats));
  cmp->add_option("--target-format", ca.target_format)->check(CLI::IsMember(kFormats));
  cmp->add_option("--source-limit", ca.source_limit, "Source subsample (0: all)");
  cmp->add_option("--target-limit", ca.target_limit, "Target subsample (0: all)");
  cmp->add_option("--input", ca.input, "Common CxHxW (default: target shape)")->check(kChw);
  cmp->add_option("--arch", ca.arch)->check(CLI::IsMember(kArchs))->capture_default_str();
  cmp->add_option("--width", ca.width)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmp->add_flag("--batchnorm", ca.batchnorm);
  cmp->add_option("--pretrain-epochs", ca.pretrain_epochs)->capture_default_str();
  cmp->add_option("--finetune-epochs", ca.finetune_epochs)->capture_default_str();
  cmp->add_option("--scratch-epochs", ca.scratch_epochs)->capture_default_str();
  add_schedule_flags(cmp, ca.train);
  cmp->add_option("--retrain-epochs", ca.retrain_epochs)->capture_default_str();
  cmp->add_option("--budget", ca.budget)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmp->add_option("--val-fraction", ca.val_fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmp->add_option("--prune-fraction", ca.prune_fraction, "Greedy share per layer")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmp->add_option("--fractions", ca.fractions)->capture_default_str();
  cmp->add_option("--subsample", ca.subsample, "Sensitivity samples (0: all)");
  cmp->add_option("--plan", ca.plan, "Plan JSON applied to both networks");
  cmp->add_option("--dataset-name", ca.dataset_name, "First CSV column (default: target dir name)");
  cmp->add_option("--seed", ca.seed)->capture_default_str();
  cmp->add_option("--out-dir", ca.out_dir)->capture_default_str();

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth-data", "Write surrogate IDX or CIFAR-10 binary files");
  synth->add_option("--kind", ya.kind, "mnist | cifar10")
      ->required()
      ->check(CLI::IsMember({"mnist", "cifar10"}));
  synth->add_option("--out", ya.out, "Output directory")->required();
  synth->add_option("--count", ya.count, "Training samples")->capture_default_str();
  synth->add_option("--test-count", ya.test_count, "Test samples")->capture_default_str();
  synth->add_option("--classes", ya.classes)->check(CLI::Range(1, 10))->capture_default_str();
  synth->add_option("--seed", ya.seed)->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  if (argv.empty()) argv.push_back("prunekit");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (report_cmd->parsed() && ra.model.empty() && ra.arch.empty()) {
      throw CLI::RequiredError("--model or --arch");
    }
    if (prune_cmd->parsed() && pa.plan.empty() && !pa.greedy) {
      throw CLI::RequiredError("--plan or --greedy");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(ta, args, out, err);
    if (sens_cmd->parsed()) return cmd_sensitivity(sa, args, out, err);
    if (prune_cmd->parsed()) return cmd_prune(pa, args, out, err);
    if (report_cmd->parsed()) return cmd_report(ra, args, out, err);
    if (cmp->parsed()) return cmd_compare(ca, args, out, err);
    if (synth->parsed()) return cmd_synth(ya, args, out, err);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace prunekit::cli
