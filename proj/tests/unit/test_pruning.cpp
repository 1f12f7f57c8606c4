#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "prunekit/metering.hpp"
#include "prunekit/pruning.hpp"
#include "reference_counts.hpp"

using namespace prunekit;
using namespace prunekit::testing;

namespace {

std::vector<PruneRequest> keep_plan(const std::vector<std::pair<std::string, std::size_t>>& keep) {
  std::vector<PruneRequest> plan;
  for (const auto& [id, k] : keep) plan.push_back({id, std::nullopt, k});
  return plan;
}

void check_counts(const ModelGraph& m, const std::vector<reference::Row>& rows, bool network_a) {
  for (const auto& row : rows) {
    CHECK_MESSAGE(layer_param_count(m.layer(row.layer)) ==
                      (network_a ? row.network_a : row.network_b),
                  row.layer);
  }
}

}  // namespace

TEST_CASE("norm profile sorts ascending with stable ties") {
  ModelGraph m = build_simple_cnn({});
  Tensor& w = m.layer("conv1").params.at("weight");
  const std::vector<float> scale{3, 1, 1, 2};
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t i = 0; i < 9; ++i) w[f * 9 + i] = (i % 2 ? -1.0f : 1.0f) * scale[f];
  const FilterNormProfile p = compute_norm_profile(m, "conv1");
  REQUIRE(p.entries.size() == 4);
  CHECK(p.entries[0].index == 1);
  CHECK(p.entries[1].index == 2);
  CHECK(p.entries[2].index == 3);
  CHECK(p.entries[3].index == 0);
  CHECK(p.entries[0].norm == doctest::Approx(9.0));
  const PruningStep s = resolve_step(m, {"conv1", 2, std::nullopt});
  CHECK(s.indices == std::vector<std::size_t>{1, 2});
}

TEST_CASE("selection is invariant to positive rescaling of a layer") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelGraph m = random_relu_cnn(rng, 4, 8);
    for (const Layer& l : m.layers) {
      if (!l.prunable || l.out_channels < 2) continue;
      ModelGraph scaled = m;
      const float c = std::uniform_real_distribution<float>(0.1f, 10.0f)(rng);
      for (float& v : scaled.layer(l.id).params.at("weight").data()) v *= c;
      const std::size_t k = l.out_channels / 2;
      CHECK(resolve_step(m, {l.id, k, std::nullopt}).indices ==
            resolve_step(scaled, {l.id, k, std::nullopt}).indices);
    }
  }
}

TEST_CASE("pruning equals masking on random ReLU networks") {
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    const MaskingCase c = masking_equivalence_case(seed);
    INFO("seed " << seed << " layer " << c.layer_id);
    CHECK(c.removed > 0);
    CHECK(c.max_error <= 1e-5);
  }
}

TEST_CASE("pruning removes exactly the selected slices") {
  SimpleCnnOptions o;
  o.channels = {4, 3};
  o.batchnorm = true;
  o.hidden = 5;
  const ModelGraph m = build_simple_cnn(o);
  const PruningStep s = resolve_step(m, {"conv1", std::nullopt, 3});
  REQUIRE(s.indices.size() == 1);
  const std::size_t gone = s.indices[0];
  const ModelGraph p = prune_filters(m, s);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < 4; ++i)
    if (i != gone) kept.push_back(i);

  const Tensor& w_old = m.layer("conv1").params.at("weight");
  const Tensor& w_new = p.layer("conv1").params.at("weight");
  CHECK(w_new.shape() == Shape{3, 1, 3, 3});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < 9; ++i) CHECK(w_new[r * 9 + i] == w_old[kept[r] * 9 + i]);
  for (const char* name : {"gamma", "beta", "running_mean", "running_var"}) {
    CHECK(p.layer("bn1").params.at(name).shape() == Shape{3});
  }
  const Tensor& c2_old = m.layer("conv2").params.at("weight");
  const Tensor& c2_new = p.layer("conv2").params.at("weight");
  CHECK(c2_new.shape() == Shape{3, 3, 3, 3});
  for (std::size_t co = 0; co < 3; ++co)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t i = 0; i < 9; ++i)
        CHECK(c2_new[(co * 3 + r) * 9 + i] == c2_old[(co * 4 + kept[r]) * 9 + i]);
  CHECK(p.layer("conv2").in_channels == 3);
  CHECK(meter(p).total_params < meter(m).total_params);
  CHECK(m.layer("conv1").out_channels == 4);
}

TEST_CASE("gap and flatten heads lose the matching dense columns") {
  SimpleCnnOptions o;
  o.channels = {3};
  o.hidden = 4;
  o.flatten_head = true;
  o.input_shape = {1, 4, 4};
  const ModelGraph m = build_simple_cnn(o);
  const ModelGraph p = prune_filters(m, resolve_step(m, {"conv1", 1, std::nullopt}));
  CHECK(p.layer("fc1").in_channels == 2 * 16);
  o.flatten_head = false;
  const ModelGraph g = build_simple_cnn(o);
  CHECK(prune_filters(g, resolve_step(g, {"conv1", 1, std::nullopt})).layer("fc1").in_channels == 2);
}

TEST_CASE("vgg16 plans reproduce the reference per-layer counts") {
  const ModelGraph base = build_vgg16_gap({});
  SUBCASE("network A") {
    const ModelGraph a = apply_plan(base, resolve_plan(base, keep_plan(reference::vgg16_plan_a())));
    check_counts(a, reference::vgg16_rows(), true);
    CHECK(format_fixed2(meter(a).total_params / 1e6) == "3.43");
  }
  SUBCASE("network B") {
    const ModelGraph b = apply_plan(base, resolve_plan(base, keep_plan(reference::vgg16_plan_b())));
    check_counts(b, reference::vgg16_rows(), false);
    CHECK(format_fixed2(meter(b).total_params / 1e6) == "8.26");
  }
}

TEST_CASE("mobilenet plans propagate through depthwise layers") {
  const ModelGraph base = build_mobilenet_v1({});
  const ModelGraph a =
      apply_plan(base, resolve_plan(base, keep_plan(reference::mobilenet_plan_a())));
  check_counts(a, reference::mobilenet_rows(), true);
  CHECK(a.layer("dw1").out_channels == 21);
  CHECK(a.layer("bn1").out_channels == 21);
  CHECK(a.layer("dw1_bn").params.at("gamma").numel() == 21);
  const ModelGraph b =
      apply_plan(base, resolve_plan(base, keep_plan(reference::mobilenet_plan_b())));
  check_counts(b, reference::mobilenet_rows(), false);
  a.validate();
  b.validate();
}

TEST_CASE("invalid steps are rejected") {
  const ModelGraph m = build_simple_cnn({});
  CHECK_THROWS_AS(resolve_step(m, {"fc1", 1, std::nullopt}), PlanError);
  CHECK_THROWS_AS(resolve_step(m, {"nope", 1, std::nullopt}), PlanError);
  CHECK_THROWS_AS(resolve_step(m, {"relu1", 1, std::nullopt}), PlanError);
  CHECK_THROWS_AS(resolve_step(m, {"conv1", 4, std::nullopt}), PlanError);
  CHECK_THROWS_AS(resolve_step(m, {"conv1", 0, std::nullopt}), PlanError);
  CHECK_THROWS_AS(resolve_step(m, {"conv1", std::nullopt, 0}), PlanError);
  CHECK_THROWS_AS(resolve_step(m, {"conv1", std::nullopt, 5}), PlanError);
  const ModelGraph mb = build_mobilenet_v1({.width = 0.25});
  CHECK_THROWS_AS(resolve_step(mb, {"dw3", 1, std::nullopt}), PlanError);
  try {
    resolve_step(m, {"fc1", 1, std::nullopt});
  } catch (const PlanError& e) {
    CHECK(std::string(e.what()).find("classifier") != std::string::npos);
  }
}

TEST_CASE("plans resolve sequentially and name the failing step") {
  const ModelGraph m = build_simple_cnn({});
  const std::vector<PruneRequest> twice{{"conv1", 2, std::nullopt}, {"conv1", 1, std::nullopt}};
  const PruningPlan plan = resolve_plan(m, twice);
  CHECK(apply_plan(m, plan).layer("conv1").out_channels == 1);
  const std::vector<PruneRequest> too_many{{"conv1", 2, std::nullopt}, {"conv1", 2, std::nullopt}};
  try {
    resolve_plan(m, too_many);
    FAIL("expected PlanError");
  } catch (const PlanError& e) {
    CHECK(std::string(e.what()).find("plan step 2") != std::string::npos);
  }
}

TEST_CASE("plan json") {
  using nlohmann::json;
  const auto plan = parse_plan_json(json::parse(R"([{"layer":"conv8","keep":192},{"layer":"conv9","m":320}])"));
  REQUIRE(plan.size() == 2);
  CHECK(plan[0].keep == 192u);
  CHECK(plan[1].m == 320u);
  CHECK(parse_plan_json(plan_requests_json(plan)).size() == 2);
  CHECK(parse_plan_json(json::array()).empty());

  auto message = [](const char* text) {
    try {
      parse_plan_json(json::parse(text));
    } catch (const PlanError& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  CHECK(message(R"({"layer":"conv1"})").find("array") != std::string::npos);
  CHECK(message(R"([{"layer":"conv1","m":1},{"m":2}])").find("step 2") != std::string::npos);
  CHECK(message(R"([{"layer":"conv3","m":1,"keep":2}])").find("conv3") != std::string::npos);
  CHECK(message(R"([{"layer":"conv3"}])").find("exactly one") != std::string::npos);
  CHECK(message(R"([{"layer":"conv3","m":-1}])").find("non-negative") != std::string::npos);
  CHECK(message(R"([{"layer":"conv3","m":1,"extra":true}])").find("extra") != std::string::npos);
}
