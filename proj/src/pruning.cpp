#include "prunekit/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "prunekit/errors.hpp"

namespace prunekit {
namespace {

// Keeps the listed slices of `axis`; each logical slice spans `group`
// consecutive positions on that axis (Flatten feeding a Dense layer).
Tensor select_axis(const Tensor& t, std::size_t axis, std::span<const std::size_t> keep,
                   std::size_t group = 1) {
  const Shape& s = t.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape ns = s;
  ns[axis] = keep.size() * group;
  Tensor out(ns);
  float* dst = out.ptr();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k : keep) {
      const float* src = t.ptr() + (o * s[axis] + k * group) * inner;
      dst = std::copy(src, src + group * inner, dst);
    }
  }
  return out;
}

void select_param(Layer& l, const char* name, std::size_t axis, std::span<const std::size_t> keep,
                  std::size_t group = 1) {
  auto it = l.params.find(name);
  if (it != l.params.end()) it->second = select_axis(it->second, axis, keep, group);
}

std::size_t final_param_layer(const ModelGraph& model) {
  for (std::size_t i = model.layers.size(); i-- > 0;) {
    if (is_parameterized(model.layers[i].kind)) return i;
  }
  return model.layers.size();
}

}  // namespace

void require_prunable(const ModelGraph& model, std::string_view layer_id) {
  const auto idx = model.index_of(layer_id);
  if (!idx) throw PlanError("unknown layer '" + std::string(layer_id) + "'");
  const Layer& l = model.layers[*idx];
  if (*idx == final_param_layer(model) && l.kind == LayerKind::Dense) {
    throw PlanError("layer '" + l.id + "' is the final classifier and cannot be pruned");
  }
  if (!is_filter_layer(l.kind) || !l.prunable) {
    throw PlanError("layer '" + l.id + "' (" + std::string(to_string(l.kind)) +
                    ") is not a prunable convolution");
  }
}

FilterNormProfile compute_norm_profile(const ModelGraph& model, std::string_view layer_id) {
  require_prunable(model, layer_id);
  const Layer& l = model.layer(layer_id);
  const Tensor& w = l.params.at("weight");
  const std::size_t n = w.dim(0);
  const std::size_t per = n ? w.numel() / n : 0;
  FilterNormProfile p{l.id, {}};
  p.entries.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    double s = 0.0;
    const float* row = w.ptr() + f * per;
    for (std::size_t i = 0; i < per; ++i) s += std::fabs(static_cast<double>(row[i]));
    p.entries.push_back({f, s});
  }
  std::stable_sort(p.entries.begin(), p.entries.end(),
                   [](const FilterNorm& a, const FilterNorm& b) { return a.norm < b.norm; });
  return p;
}

PruningStep resolve_step(const ModelGraph& model, const PruneRequest& request) {
  require_prunable(model, request.layer_id);
  const std::size_t filters = model.layer(request.layer_id).out_channels;
  if (request.m.has_value() == request.keep.has_value()) {
    throw PlanError("step for layer '" + request.layer_id +
                    "' must give exactly one of 'm' or 'keep'");
  }
  if (request.keep && *request.keep >= filters) {
    throw PlanError("step for layer '" + request.layer_id + "': keep=" +
                    std::to_string(*request.keep) + " is not below the current " +
                    std::to_string(filters) + " filters");
  }
  const std::size_t m = request.m ? *request.m : filters - *request.keep;
  if (m == 0) throw PlanError("step for layer '" + request.layer_id + "': m must be positive");
  if (m >= filters) {
    throw PlanError("step for layer '" + request.layer_id + "': m=" + std::to_string(m) +
                    " would empty a layer of " + std::to_string(filters) + " filters");
  }
  const FilterNormProfile profile = compute_norm_profile(model, request.layer_id);
  PruningStep step{request.layer_id, m, {}};
  step.indices.reserve(m);
  for (std::size_t i = 0; i < m; ++i) step.indices.push_back(profile.entries[i].index);
  return step;
}

ModelGraph prune_filters(const ModelGraph& model, const PruningStep& step) {
  require_prunable(model, step.layer_id);
  const std::size_t idx = *model.index_of(step.layer_id);
  const std::size_t filters = model.layers[idx].out_channels;
  if (step.m == 0 || step.m >= filters) {
    throw PlanError("step for layer '" + step.layer_id + "': m=" + std::to_string(step.m) +
                    " must satisfy 0 < m < " + std::to_string(filters));
  }
  const std::set<std::size_t> removed(step.indices.begin(), step.indices.end());
  if (removed.size() != step.m || step.indices.size() != step.m ||
      *removed.rbegin() >= filters) {
    throw PlanError("step for layer '" + step.layer_id +
                    "': indices must be m distinct filters below " + std::to_string(filters));
  }
  std::vector<std::size_t> keep;
  keep.reserve(filters - step.m);
  for (std::size_t f = 0; f < filters; ++f) {
    if (!removed.count(f)) keep.push_back(f);
  }

  const auto shapes = model.infer_shapes();
  ModelGraph out = model;
  Layer& producer = out.layers[idx];
  select_param(producer, "weight", 0, keep);
  select_param(producer, "bias", 0, keep);
  producer.out_channels = keep.size();

  std::size_t group = 1;
  bool consumed = false;
  for (std::size_t j = idx + 1; j < out.layers.size() && !consumed; ++j) {
    Layer& l = out.layers[j];
    switch (l.kind) {
      case LayerKind::ReLU:
      case LayerKind::MaxPool:
      case LayerKind::GlobalAvgPool:
        break;
      case LayerKind::Flatten: {
        const Shape& in = shapes[j - 1];
        group = in.size() == 3 ? in[1] * in[2] : 1;
        break;
      }
      case LayerKind::BatchNorm:
        for (const char* n : {"gamma", "beta", "running_mean", "running_var"}) {
          select_param(l, n, 0, keep);
        }
        l.in_channels = l.out_channels = keep.size();
        break;
      case LayerKind::DepthwiseConv:
        select_param(l, "weight", 0, keep);
        select_param(l, "bias", 0, keep);
        l.in_channels = l.out_channels = keep.size();
        break;
      case LayerKind::Conv:
      case LayerKind::PointwiseConv:
        select_param(l, "weight", 1, keep);
        l.in_channels = keep.size();
        consumed = true;
        break;
      case LayerKind::Dense:
        select_param(l, "weight", 1, keep, group);
        l.in_channels = keep.size() * group;
        consumed = true;
        break;
    }
  }
  if (!consumed) {
    throw PlanError("layer '" + step.layer_id +
                    "' has no downstream consumer; pruning it would change the model output");
  }
  out.validate();
  return out;
}

PruningPlan resolve_plan(const ModelGraph& model, std::span<const PruneRequest> requests,
                         PlanProvenance provenance) {
  PruningPlan plan{{}, provenance};
  if (requests.empty()) return plan;
  ModelGraph state = model;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    try {
      PruningStep step = resolve_step(state, requests[i]);
      state = prune_filters(state, step);
      plan.steps.push_back(std::move(step));
    } catch (const PlanError& e) {
      throw PlanError("plan step " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return plan;
}

ModelGraph apply_plan(const ModelGraph& model, const PruningPlan& plan) {
  ModelGraph state = model;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    try {
      state = prune_filters(state, plan.steps[i]);
    } catch (const PlanError& e) {
      throw PlanError("plan step " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return state;
}

std::vector<PruneRequest> parse_plan_json(const nlohmann::json& j) {
  if (!j.is_array()) throw PlanError("plan must be a JSON array of steps");
  std::vector<PruneRequest> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& s = j[i];
    const std::string where = "plan step " + std::to_string(i + 1);
    if (!s.is_object()) throw PlanError(where + ": must be an object");
    if (!s.contains("layer") || !s["layer"].is_string()) {
      throw PlanError(where + ": missing string field 'layer'");
    }
    PruneRequest r;
    r.layer_id = s["layer"].get<std::string>();
    for (const char* key : {"m", "keep"}) {
      if (!s.contains(key)) continue;
      if (!s[key].is_number_integer() || s[key].get<long long>() < 0) {
        throw PlanError(where + " (layer '" + r.layer_id + "'): '" + key +
                        "' must be a non-negative integer");
      }
      (std::string_view(key) == "m" ? r.m : r.keep) = s[key].get<std::size_t>();
    }
    if (r.m.has_value() == r.keep.has_value()) {
      throw PlanError(where + " (layer '" + r.layer_id + "'): give exactly one of 'm' or 'keep'");
    }
    if (r.m && *r.m == 0) {
      throw PlanError(where + " (layer '" + r.layer_id + "'): 'm' must be positive");
    }
    for (const auto& [key, value] : s.items()) {
      if (key != "layer" && key != "m" && key != "keep") {
        throw PlanError(where + " (layer '" + r.layer_id + "'): unknown field '" + key + "'");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json plan_requests_json(std::span<const PruneRequest> requests) {
  nlohmann::json j = nlohmann::json::array();
  for (const PruneRequest& r : requests) {
    nlohmann::json s = {{"layer", r.layer_id}};
    if (r.m) s["m"] = *r.m;
    if (r.keep) s["keep"] = *r.keep;
    j.push_back(std::move(s));
  }
  return j;
}

nlohmann::json plan_json(const PruningPlan& plan) {
  nlohmann::json steps = nlohmann::json::array();
  for (const PruningStep& s : plan.steps) {
    steps.push_back({{"layer", s.layer_id}, {"m", s.m}, {"indices", s.indices}});
  }
  return {{"provenance",
           plan.provenance == PlanProvenance::Manual ? "manual" : "sensitivity-guided"},
          {"steps", steps}};
}

}  // namespace prunekit
