#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

// Plan or step that is inconsistent with the model it is applied to.
class PlanError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FilterNorm {
  std::size_t index = 0;
  double norm = 0.0;  // sum of |w| over the filter's C_in * k * k weights; bias excluded
  bool operator==(const FilterNorm&) const = default;
};

// Filters of one layer sorted by ascending L1 norm; ties keep the lower index first.
struct FilterNormProfile {
  std::string layer_id;
  std::vector<FilterNorm> entries;
};

// Removal of `m` filters from one layer. `indices` are the removed filters in
// ascending-norm order at resolution time.
struct PruningStep {
  std::string layer_id;
  std::size_t m = 0;
  std::vector<std::size_t> indices;
};

enum class PlanProvenance { Manual, SensitivityGuided };

struct PruningPlan {
  std::vector<PruningStep> steps;
  PlanProvenance provenance = PlanProvenance::Manual;
};

// Unresolved request: remove `m` filters, or shrink the layer to `keep` filters.
struct PruneRequest {
  std::string layer_id;
  std::optional<std::size_t> m;
  std::optional<std::size_t> keep;
};

// Throws PlanError unless the layer exists, is a prunable Conv/PointwiseConv
// and is not the final classifier.
void require_prunable(const ModelGraph& model, std::string_view layer_id);

FilterNormProfile compute_norm_profile(const ModelGraph& model, std::string_view layer_id);

// Smallest-norm filters of the layer under the current weights.
PruningStep resolve_step(const ModelGraph& model, const PruneRequest& request);

// Removes the step's filters, their feature maps and every dependent slice:
// BatchNorm channels, depthwise filters (channel identity passes through),
// and the input slices of the next Conv/PointwiseConv or Dense consumer.
ModelGraph prune_filters(const ModelGraph& model, const PruningStep& step);

// Resolves each request against the model state left by the previous steps.
PruningPlan resolve_plan(const ModelGraph& model, std::span<const PruneRequest> requests,
                         PlanProvenance provenance = PlanProvenance::Manual);
ModelGraph apply_plan(const ModelGraph& model, const PruningPlan& plan);

// Plan file: [{"layer": "conv8", "m": 320}, {"layer": "conv9", "keep": 192}].
std::vector<PruneRequest> parse_plan_json(const nlohmann::json& j);
nlohmann::json plan_requests_json(std::span<const PruneRequest> requests);
nlohmann::json plan_json(const PruningPlan& plan);

}  // namespace prunekit
