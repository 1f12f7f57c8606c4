// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Usage: prunekit_acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "prunekit/data.hpp"
#include "prunekit/errors.hpp"
#include "prunekit/metering.hpp"
#include "prunekit/model.hpp"
#include "prunekit/pipeline.hpp"
#include "prunekit/pruning.hpp"
#include "prunekit/sensitivity.hpp"
#include "prunekit/trainer.hpp"
#include "reference_counts.hpp"
#include "tempdir.hpp"

namespace fs = std::filesystem;
using namespace prunekit;
using prunekit::testing::read_bytes;
using prunekit::testing::TempDir;

namespace {

// Thrown by `expect` with the first violated condition.
struct Failure {
  std::string what;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string num(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

ModelGraph vgg16(std::size_t side = 32) {
  BuildOptions o;
  o.input_shape = {3, side, side};
  o.num_classes = 10;
  return build_vgg16_gap(o);
}

std::map<std::string, std::uint64_t> params_by_layer(const ModelGraph& m) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& row : count_params(m)) out[row.layer_id] = row.params;
  return out;
}

void check_rows(const ModelGraph& m, const std::vector<reference::Row>& rows,
                std::uint64_t reference::Row::*column, const std::string& table) {
  const auto counts = params_by_layer(m);
  for (const auto& row : rows) {
    expect(counts.count(row.layer) == 1, table + ": layer " + row.layer + " missing");
    expect(counts.at(row.layer) == row.*column,
           table + ": " + row.layer + " has " + std::to_string(counts.at(row.layer)) +
               ", expected " + std::to_string(row.*column));
  }
}

std::string c1() {
  const ModelGraph m = vgg16();
  check_rows(m, reference::vgg16_rows(), &reference::Row::baseline, "VGG16 baseline");
  std::size_t parameterized = 0;
  for (const auto& row : count_params(m)) parameterized += is_parameterized(row.kind) ? 1 : 0;
  expect(parameterized == 15, "expected 15 parameterized layers, got " + std::to_string(parameterized));
  const std::uint64_t total = meter(m).total_params;
  expect(total == 14982474, "total " + std::to_string(total));
  return "15 layers exact, total 14,982,474";
}

std::string c2() {
  BuildOptions o;
  const ModelGraph m = build_mobilenet_v1(o);
  check_rows(m, reference::mobilenet_rows(), &reference::Row::baseline, "MobileNet baseline");
  const double total = static_cast<double>(meter(m).total_params);
  const double rel = std::abs(total - 3.76e6) / 3.76e6;
  expect(rel <= 0.03, "total " + num(total) + " is " + num(100 * rel) + "% from 3.76M");
  return "conv1 + 13 pointwise + dense exact, total " + num(total, 7) + " (" + num(100 * rel, 3) +
         "% from 3.76M, BatchNorm gamma/beta counted)";
}

std::string c3() {
  const MeterReport small = meter(vgg16(32));
  const MeterReport large = meter(vgg16(224));
  const double flops = static_cast<double>(small.total_flops);
  const double rel = std::abs(flops - 627.48e6) / 627.48e6;
  expect(rel <= 0.005, "32x32 total " + num(flops) + " FLOPs, " + num(100 * rel) + "% from 627.48M");
  std::uint64_t conv_small = 0, conv_large = 0;
  for (const auto& r : small.rows) conv_small += r.kind == LayerKind::Conv ? r.flops : 0;
  for (const auto& r : large.rows) conv_large += r.kind == LayerKind::Conv ? r.flops : 0;
  expect(conv_large == 49 * conv_small, "conv FLOP ratio is not exactly 49");
  const double ratio = static_cast<double>(large.total_flops) / flops;
  expect(ratio >= 48.9 && ratio <= 49.0, "grand-total ratio " + num(ratio));
  return "total " + num(flops / 1e6, 8) + "M (" + num(100 * rel, 3) +
         "% off), conv ratio 49 exact, total ratio " + num(ratio, 6);
}

std::string c4() {
  const MeterReport r = meter(vgg16());
  const std::string shown = format_fixed2(r.size_mb());
  expect(shown == "57.15", "size renders as " + shown);
  expect(std::abs(r.size_mb() - 57.22) <= 0.2, "size " + num(r.size_mb()));
  return shown + " MB";
}

std::string c5() {
  // Invert the reference Network-A column: conv params = (9 C_in + 1) C_out.
  const ModelGraph base = vgg16();
  std::vector<PruneRequest> plan;
  std::uint64_t cin = 3;
  std::ostringstream kept;
  for (const auto& row : reference::vgg16_rows()) {
    if (row.layer.rfind("conv", 0) != 0) continue;
    const std::uint64_t per_filter = 9 * cin + 1;
    expect(row.network_a % per_filter == 0, row.layer + " count does not invert");
    const std::uint64_t cout = row.network_a / per_filter;
    if (cout != base.layer(row.layer).out_channels) {
      plan.push_back({row.layer, std::nullopt, cout});
      kept << row.layer << "->" << cout << ' ';
    }
    cin = cout;
  }
  std::vector<std::pair<std::string, std::size_t>> inverted;
  for (const auto& r : plan) inverted.emplace_back(r.layer_id, *r.keep);
  expect(inverted == reference::vgg16_plan_a(), "inverted plan differs from the expected keep counts");

  const ModelGraph pruned = apply_plan(base, resolve_plan(base, plan));
  check_rows(pruned, reference::vgg16_rows(), &reference::Row::network_a, "VGG16 Network-A");
  expect(params_by_layer(pruned).at("fc1") == 66048, "fc1 is not 66,048");
  const std::uint64_t total = meter(pruned).total_params;
  expect(format_fixed2(static_cast<double>(total) / 1e6) == "3.43", "total " + std::to_string(total));
  return "plan " + kept.str() + "gives every Network-A count, total " + std::to_string(total);
}

std::string c6() {
  double worst = 0.0;
  const std::size_t cases = 150;
  for (std::size_t seed = 0; seed < cases; ++seed) {
    const auto c = prunekit::testing::masking_equivalence_case(seed);
    worst = std::max(worst, c.max_error);
    expect(c.max_error <= 1e-5, "seed " + std::to_string(seed) + " (" + c.layer_id + ", " +
                                    std::to_string(c.removed) + " removed) error " + num(c.max_error));
  }
  return std::to_string(cases) + " random networks, max abs error " + num(worst, 3);
}

std::string c7() {
  std::ostringstream summary;
  std::size_t total = 0;
  for (const std::string& op : prunekit::testing::differentiable_ops()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto r = prunekit::testing::gradcheck_case(op, seed, 1e-2f);
      worst = std::max(worst, r.max_rel_error);
      total += r.coordinates;
      expect(r.max_rel_error < 1e-3, op + " seed " + std::to_string(seed) + " " + r.shape +
                                         ": rel error " + num(r.max_rel_error));
    }
    summary << op << ' ' << num(worst, 2) << ' ';
  }
  return std::to_string(prunekit::testing::differentiable_ops().size()) +
         " ops x 100 cases, " + std::to_string(total) + " coordinates; worst " + summary.str();
}

std::string c8() {
  // A 2-filter-per-layer net suffices for stripes; the toy is 4x wider.
  SimpleCnnOptions o;
  o.input_shape = {1, 8, 8};
  o.num_classes = 2;
  o.channels = {8, 8};
  o.seed = 8;
  ModelGraph model = build_simple_cnn(o);
  const LabeledDataset train_set = make_stripes_dataset(256, {1, 8, 8}, 81);
  const LabeledDataset val_set = make_stripes_dataset(200, {1, 8, 8}, 82);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.lr = 0.01;
  cfg.seed = 83;
  const TrainHistory h = train(model, train_set, &val_set, cfg);
  const double base = evaluate(model, val_set);
  expect(base >= 0.99, "toy reaches only " + num(base) + " validation accuracy");

  const std::vector<double> fractions = default_fractions();
  const auto curves = sweep_all(model, fractions, val_set);
  const auto plan = greedy_plan(model, curves, 0.5);
  expect(plan.size() == 2, "greedy plan has " + std::to_string(plan.size()) + " steps");

  PruneSessionConfig sc;
  sc.budget = 0.01;
  sc.retrain_epochs = 3;
  sc.retrain_lr = h.lowest_lr;
  const SessionResult r = run_prune_session(model, plan, train_set, val_set, cfg, sc);
  expect(r.log.reason == TerminalReason::PlanComplete, "greedy session stopped early");
  expect(r.log.phases.size() == plan.size(), "not every phase committed");
  std::uint64_t prev = r.log.baseline_params;
  for (const auto& p : r.log.phases) {
    expect(p.accuracy >= r.log.baseline_accuracy - 0.01,
           "phase " + std::to_string(p.phase) + " breaks the 1% rule");
    expect(p.params < prev, "params not strictly decreasing at phase " + std::to_string(p.phase));
    prev = p.params;
  }
  expect(meter(r.model).total_params == r.log.final_params(), "final model does not re-meter");
  expect(evaluate(r.model, val_set) == r.log.phases.back().accuracy, "final accuracy not reproduced");

  // Budget 0 without retraining: the first phase that loses any accuracy is rolled back.
  std::vector<PruneRequest> harsh = plan;
  harsh.push_back({"conv1", std::nullopt, 1});
  PruneSessionConfig strict = sc;
  strict.budget = 0.0;
  strict.retrain_epochs = 0;
  const SessionResult s = run_prune_session(model, harsh, train_set, val_set, cfg, strict);
  expect(s.log.reason == TerminalReason::BudgetExhausted, "budget 0 never triggered a rollback");
  expect(s.log.rejected.has_value(), "no rejected phase recorded");
  expect(s.log.rejected->accuracy < s.log.baseline_accuracy, "rejected phase did not lose accuracy");
  PruningPlan committed;
  for (const auto& p : s.log.phases) committed.steps.push_back(p.step);
  expect(s.model == apply_plan(model, committed), "rolled-back model differs from committed steps");
  const double kept = evaluate(s.model, val_set);
  const double expected = s.log.phases.empty() ? s.log.baseline_accuracy : s.log.phases.back().accuracy;
  expect(kept == expected, "rolled-back model accuracy " + num(kept) + " vs " + num(expected));
  return "toy val " + num(base, 4) + ", " + std::to_string(r.log.phases.size()) +
         " greedy phases, params " + std::to_string(r.log.baseline_params) + " -> " +
         std::to_string(r.log.final_params()) + "; rollback at phase " +
         std::to_string(s.log.rejected->phase) + " restores the committed model";
}

int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "prunekit");
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

std::string c9(double& slowest_run) {
  TempDir tmp;
  std::string mnist = env_or_empty("PRUNEKIT_MNIST_DIR");
  std::string cifar = env_or_empty("PRUNEKIT_CIFAR10_DIR");
  std::string data_note = "real MNIST / CIFAR-10";
  if (mnist.empty() || cifar.empty()) {
    mnist = (tmp / "mnist").string();
    cifar = (tmp / "cifar10").string();
    expect(cli({"synth-data", "--kind", "mnist", "--out", mnist, "--count", "2000", "--test-count",
                "100", "--seed", "1"}) == 0, "synth-data mnist failed");
    expect(cli({"synth-data", "--kind", "cifar10", "--out", cifar, "--count", "2000",
                "--test-count", "100", "--seed", "2"}) == 0, "synth-data cifar10 failed");
    data_note = "surrogate IDX / CIFAR-10 files";
  }
  // 1200 source + 1500 target samples (300 held out), 6 epochs per training run with
  // one step decay, 1 retraining epoch per phase.
  auto run = [&](const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string err;
    const int code =
        cli({"compare", "--source", mnist, "--target", cifar, "--source-limit", "1200",
             "--target-limit", "1500", "--val-fraction", "0.2", "--arch", "vgg16", "--width",
             "0.25", "--pretrain-epochs", "6", "--finetune-epochs", "6", "--scratch-epochs", "6",
             "--decay-every", "4", "--decay-factor", "0.1", "--retrain-epochs", "1",
             "--fractions", "0:0.8:0.2", "--subsample", "100", "--prune-fraction", "0.5",
             "--dataset-name", "CIFAR-10", "--seed", "2024", "--out-dir", out_dir},
            &err);
    slowest_run = std::max(
        slowest_run, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    expect(code == 0, "compare exited " + std::to_string(code) + ": " + err);
  };
  const fs::path a = tmp / "run1", b = tmp / "run2";
  run(a.string());
  run(b.string());
  for (const char* f : {"compare.csv", "compare.json", "A.log.json", "B.log.json", "A.pkpt",
                        "B.pkpt", "A.history.csv", "B.history.csv", "pretrain.history.csv"}) {
    expect(fs::exists(a / f), std::string("missing output ") + f);
    expect(read_bytes(a / f) == read_bytes(b / f), std::string(f) + " differs between runs");
  }
  std::ifstream in(a / "compare.csv");
  std::string header, row_a, row_b, extra;
  std::getline(in, header);
  std::getline(in, row_a);
  std::getline(in, row_b);
  expect(header == "dataset,network,params_m,flops_m,size_mb", "compare.csv header " + header);
  expect(row_a.rfind("CIFAR-10,A-pruned,", 0) == 0, "first row " + row_a);
  expect(row_b.rfind("CIFAR-10,B-pruned,", 0) == 0, "second row " + row_b);
  expect(!std::getline(in, extra) || extra.empty(), "unexpected extra rows");
  std::ifstream jin(a / "compare.json");
  const auto j = nlohmann::json::parse(jin);
  for (const char* n : {"A", "B"}) {
    const auto reason = j.at(n).at("session").at("terminal_reason").get<std::string>();
    expect(reason == "plan-complete" || reason == "budget-exhausted", "bad terminal reason");
  }
  const auto& obs = j.at("observation");
  return data_note + "; byte-identical over 2 runs; A-pruned " +
         std::to_string(obs.at("a_final_params").get<std::uint64_t>()) + " vs B-pruned " +
         std::to_string(obs.at("b_final_params").get<std::uint64_t>()) +
         " params (A prunes further: " + (obs.at("a_prunes_further").get<bool>() ? "yes" : "no") +
         ", observational)";
}

void put_be32(std::vector<char>& b, std::size_t at, std::uint32_t v) {
  b[at] = static_cast<char>(v >> 24);
  b[at + 1] = static_cast<char>(v >> 16);
  b[at + 2] = static_cast<char>(v >> 8);
  b[at + 3] = static_cast<char>(v);
}

std::string c10() {
  TempDir tmp;
  const fs::path idx = tmp / "idx", cifar = tmp / "cifar";
  fs::create_directories(idx);
  fs::create_directories(cifar);
  const LabeledDataset digits = make_pattern_dataset(40, {1, 28, 28}, 10, 1);
  write_idx(digits, idx / "train-images-idx3-ubyte", idx / "train-labels-idx1-ubyte");
  const LabeledDataset rgb = make_pattern_dataset(50, {3, 32, 32}, 10, 2);
  for (int i = 1; i <= 5; ++i) {
    std::vector<std::size_t> sel;
    for (std::size_t k = 0; k < 10; ++k) sel.push_back((i - 1) * 10 + k);
    write_cifar10_file(subset(rgb, sel), cifar / ("data_batch_" + std::to_string(i) + ".bin"));
  }

  const LabeledDataset li = load_idx_dir(idx, Split::Train);
  expect(li.size() == 40 && li.sample_shape() == Shape{1, 28, 28}, "canonical IDX not accepted");
  const LabeledDataset lc = load_cifar10_bin(cifar, Split::Train);
  expect(lc.size() == 50 && lc.sample_shape() == Shape{3, 32, 32}, "canonical CIFAR-10 not accepted");
  expect(lc.labels == rgb.labels, "CIFAR-10 labels do not round-trip");

  auto train_exit = [&](const fs::path& dir, const std::string& format) {
    return cli({"train", "--arch", "vgg16", "--width", "0.0625", "--data", dir.string(), "--format",
                format, "--epochs", "0", "--input", "3x32x32", "--out", (tmp / "m.pkpt").string()});
  };
  expect(train_exit(idx, "idx") == 0, "canonical IDX rejected by the CLI");
  expect(train_exit(cifar, "cifar10") == 0, "canonical CIFAR-10 rejected by the CLI");

  struct Corruption {
    std::string name;
    fs::path dir;
    std::string format;
    std::function<void(const fs::path&)> damage;
  };
  auto edit = [](const fs::path& p, const std::function<void(std::vector<char>&)>& f) {
    auto b = read_bytes(p);
    f(b);
    prunekit::testing::write_bytes(p, b);
  };
  const std::vector<Corruption> cases{
      {"IDX image magic", idx, "idx",
       [&](const fs::path& d) { edit(d / "train-images-idx3-ubyte", [](auto& b) { put_be32(b, 0, 0x0803 + 1); }); }},
      {"IDX label magic", idx, "idx",
       [&](const fs::path& d) { edit(d / "train-labels-idx1-ubyte", [](auto& b) { put_be32(b, 0, 0x0803); }); }},
      {"IDX truncated images", idx, "idx",
       [&](const fs::path& d) { edit(d / "train-images-idx3-ubyte", [](auto& b) { b.resize(b.size() - 1); }); }},
      {"IDX header without payload", idx, "idx",
       [&](const fs::path& d) {
         edit(d / "train-images-idx3-ubyte", [](auto& b) {
           b.resize(16);
           put_be32(b, 4, 1);
         });
       }},
      {"IDX truncated labels", idx, "idx",
       [&](const fs::path& d) { edit(d / "train-labels-idx1-ubyte", [](auto& b) { b.resize(b.size() - 3); }); }},
      {"IDX count disagreement", idx, "idx",
       [&](const fs::path& d) {
         edit(d / "train-labels-idx1-ubyte", [](auto& b) {
           put_be32(b, 4, 39);
           b.resize(b.size() - 1);
         });
       }},
      {"IDX label out of range", idx, "idx",
       [&](const fs::path& d) { edit(d / "train-labels-idx1-ubyte", [](auto& b) { b[8] = 10; }); }},
      {"IDX missing file", idx, "idx", [&](const fs::path& d) { fs::remove(d / "train-labels-idx1-ubyte"); }},
      {"CIFAR-10 length not a multiple of 3073", cifar, "cifar10",
       [&](const fs::path& d) { edit(d / "data_batch_3.bin", [](auto& b) { b.resize(b.size() - 100); }); }},
      {"CIFAR-10 label byte 17", cifar, "cifar10",
       [&](const fs::path& d) { edit(d / "data_batch_2.bin", [](auto& b) { b[3073] = 17; }); }},
      {"CIFAR-10 missing batch", cifar, "cifar10", [&](const fs::path& d) { fs::remove(d / "data_batch_5.bin"); }},
      {"CIFAR-10 empty batch", cifar, "cifar10",
       [&](const fs::path& d) { edit(d / "data_batch_1.bin", [](auto& b) { b.clear(); }); }},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const fs::path work = tmp / ("case" + std::to_string(i));
    fs::copy(c.dir, work);
    c.damage(work);
    bool rejected = false;
    try {
      load_dataset(work, data_format_from_string(c.format), Split::Train);
    } catch (const FormatError&) {
      rejected = true;
    }
    expect(rejected, c.name + ": loader accepted the file");
    const int code = train_exit(work, c.format);
    expect(code == cli::kExitData, c.name + ": CLI exit " + std::to_string(code) + ", expected 2");
  }
  return "canonical files accepted; " + std::to_string(cases.size()) +
         " corruption classes rejected with exit code 2";
}

struct Criterion {
  int id;
  std::string title;
  double limit_seconds;
  std::function<std::string(double&)> run;  // sets the time that counts against the limit
};

}  // namespace

int main(int argc, char** argv) {
  auto timed = [](std::string (*f)()) {
    return [f](double&) { return f(); };
  };
  const std::vector<Criterion> criteria{
      {1, "VGG16 baseline parameter counts", 1.0, timed(c1)},
      {2, "MobileNet listed layer counts", 1.0, timed(c2)},
      {3, "FLOP convention", 1.0, timed(c3)},
      {4, "size convention", 1.0, timed(c4)},
      {5, "Network-A pruning arithmetic", 1.0, timed(c5)},
      {6, "masking equivalence", 60.0, timed(c6)},
      {7, "gradient correctness", 120.0, timed(c7)},
      {8, "pipeline behavior", 600.0, timed(c8)},
      {9, "end-to-end desk-scale comparison", 3600.0, c9},
      {10, "format robustness", 10.0, timed(c10)},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    double counted = -1.0;
    std::string detail;
    bool ok = true;
    try {
      detail = c.run(counted);
    } catch (const Failure& f) {
      ok = false;
      detail = f.what;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double charged = counted >= 0.0 ? counted : elapsed;
    if (ok && charged > c.limit_seconds) {
      ok = false;
      detail += "; runtime " + num(charged, 4) + " s exceeds " + num(c.limit_seconds) + " s";
    }
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << c.id << ". " << c.title << " (" << num(elapsed, 3)
              << " s";
    if (counted >= 0.0) std::cout << ", slowest run " << num(counted, 4) << " s";
    std::cout << "): " << detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
