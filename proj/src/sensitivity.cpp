#include "prunekit/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "prunekit/trainer.hpp"

namespace prunekit {

std::vector<double> default_fractions() {
  std::vector<double> f;
  for (int i = 0; i < 10; ++i) f.push_back(i / 10.0);
  return f;
}

std::vector<double> parse_fraction_range(std::string_view text) {
  const auto c1 = text.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : text.find(':', c1 + 1);
  if (c2 == std::string_view::npos) {
    throw std::invalid_argument("fraction range must be start:stop:step, got '" +
                                std::string(text) + "'");
  }
  double start = 0, stop = 0, step = 0;
  try {
    start = std::stod(std::string(text.substr(0, c1)));
    stop = std::stod(std::string(text.substr(c1 + 1, c2 - c1 - 1)));
    step = std::stod(std::string(text.substr(c2 + 1)));
  } catch (const std::exception&) {
    throw std::invalid_argument("fraction range must be numeric: '" + std::string(text) + "'");
  }
  if (!(step > 0.0) || start < 0.0 || stop >= 1.0 || stop < start) {
    throw std::invalid_argument("fraction range needs 0 <= start <= stop < 1 and step > 0");
  }
  std::vector<double> out;
  for (std::size_t i = 0;; ++i) {
    // Round to 12 decimals so 0.1 steps land on their decimal values.
    const double f = std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12;
    if (f > stop + 1e-9) break;
    out.push_back(f);
  }
  return out;
}

SensitivityCurve sweep_layer(const ModelGraph& model, std::string_view layer_id,
                             std::span<const double> fractions, const LabeledDataset& eval_set,
                             const SweepOptions& options) {
  if (eval_set.size() == 0) throw std::invalid_argument("sensitivity sweep needs a non-empty eval set");
  require_prunable(model, layer_id);
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] < 1.0)) {
      throw std::invalid_argument("fractions must lie in [0, 1)");
    }
    if (i && !(fractions[i] > fractions[i - 1])) {
      throw std::invalid_argument("fractions must be strictly increasing");
    }
  }
  const LabeledDataset sample =
      options.subsample ? subsample(eval_set, options.subsample, options.seed) : eval_set;

  SensitivityCurve curve;
  curve.layer_id = std::string(layer_id);
  curve.filters = model.layer(layer_id).out_channels;
  curve.baseline_accuracy = evaluate(model, sample);
  const FilterNormProfile profile = compute_norm_profile(model, layer_id);

  std::map<std::size_t, double> by_count{{0, curve.baseline_accuracy}};
  for (double f : fractions) {
    std::size_t count = static_cast<std::size_t>(std::floor(f * static_cast<double>(curve.filters) + 1e-9));
    count = std::min(count, curve.filters - 1);
    auto it = by_count.find(count);
    if (it == by_count.end()) {
      PruningStep step{curve.layer_id, count, {}};
      for (std::size_t i = 0; i < count; ++i) step.indices.push_back(profile.entries[i].index);
      const ModelGraph pruned = prune_filters(model, step);
      it = by_count.emplace(count, evaluate(pruned, sample)).first;
    }
    curve.points.push_back({f, count, it->second});
  }
  return curve;
}

std::vector<SensitivityCurve> sweep_all(const ModelGraph& model, std::span<const double> fractions,
                                        const LabeledDataset& eval_set,
                                        const SweepOptions& options) {
  std::vector<SensitivityCurve> curves;
  for (const Layer& l : model.layers) {
    if (l.prunable && is_filter_layer(l.kind)) {
      curves.push_back(sweep_layer(model, l.id, fractions, eval_set, options));
    }
  }
  return curves;
}

NormReport norm_report(const ModelGraph& model) {
  NormReport r;
  for (const Layer& l : model.layers) {
    if (!(l.prunable && is_filter_layer(l.kind))) continue;
    r.profiles.push_back(compute_norm_profile(model, l.id));
    const auto& e = r.profiles.back().entries;
    const double mx = e.empty() ? 0.0 : e.back().norm;
    std::vector<double> norm(e.size(), 0.0);
    if (mx > 0.0) {
      for (std::size_t i = 0; i < e.size(); ++i) norm[i] = e[i].norm / mx;
    }
    r.normalized.push_back(std::move(norm));
  }
  return r;
}

double curve_drop(const SensitivityCurve& curve) {
  if (curve.points.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : curve.points) s += curve.baseline_accuracy - p.accuracy;
  return s / static_cast<double>(curve.points.size());
}

std::vector<PruneRequest> greedy_plan(const ModelGraph& model,
                                      std::span<const SensitivityCurve> curves, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("greedy pruning fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(curves.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return curve_drop(curves[a]) < curve_drop(curves[b]);
  });
  std::vector<PruneRequest> plan;
  for (std::size_t i : order) {
    const std::size_t n = model.layer(curves[i].layer_id).out_channels;
    const auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    if (m >= 1 && m < n) plan.push_back({curves[i].layer_id, m, std::nullopt});
  }
  return plan;
}

std::string sensitivity_csv(std::span<const SensitivityCurve> curves) {
  std::ostringstream os;
  os << "layer_id,fraction,accuracy\n";
  char buf[96];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof buf, ",%.4g,%.9g\n", p.fraction, p.accuracy);
      os << c.layer_id << buf;
    }
  }
  return os.str();
}

std::string norms_csv(const NormReport& report) {
  std::ostringstream os;
  os << "layer_id,rank,norm,norm_normalized\n";
  char buf[96];
  for (std::size_t l = 0; l < report.profiles.size(); ++l) {
    const auto& p = report.profiles[l];
    for (std::size_t r = 0; r < p.entries.size(); ++r) {
      std::snprintf(buf, sizeof buf, ",%zu,%.9g,%.9g\n", r, p.entries[r].norm,
                    report.normalized[l][r]);
      os << p.layer_id << buf;
    }
  }
  return os.str();
}

}  // namespace prunekit
