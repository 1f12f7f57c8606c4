#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "prunekit/model.hpp"

namespace prunekit {

// Counting conventions:
//   Conv / PointwiseConv  params (k^2 C_in + b) C_out      FLOPs 2 k^2 C_in C_out H' W'
//   DepthwiseConv         params k^2 C (+ C if biased)    FLOPs 2 k^2 C H' W'
//   Dense                 params (F_in + b) F_out         FLOPs 2 F_in F_out
//   BatchNorm             params 2 C (running statistics are not counted)
// All other kinds contribute nothing. FLOPs are 2 x multiply-accumulates.
struct MeterRow {
  std::string layer_id;
  LayerKind kind = LayerKind::ReLU;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  Shape out_shape;
};

struct MeterReport {
  std::vector<MeterRow> rows;  // one per layer, in chain order
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;

  std::uint64_t size_bytes() const { return 4 * total_params; }
  // bytes / 2^20
  double size_mb() const;
};

std::uint64_t layer_param_count(const Layer& layer);

std::vector<MeterRow> count_params(const ModelGraph& model);
std::vector<MeterRow> count_flops(const ModelGraph& model, const Shape& input_chw);
MeterReport meter(const ModelGraph& model, const Shape& input_chw);
inline MeterReport meter(const ModelGraph& model) { return meter(model, model.input_shape); }

double size_mb(const ModelGraph& model);
// Two-decimal rendering used by every report ("57.15").
std::string format_fixed2(double value);

// CSV `layer_id,kind,params,flops,out_shape`, one row per parameterized layer
// followed by a TOTAL row; header only when no parameterized layer exists.
std::string meter_csv(const MeterReport& report);
nlohmann::json meter_json(const MeterReport& report);

inline constexpr const char* kMeterFootnote =
    "params exclude BatchNorm running statistics; FLOPs = 2 x MACs over conv and dense layers; "
    "size = 4 bytes per parameter, MB = 2^20 bytes";

}  // namespace prunekit
