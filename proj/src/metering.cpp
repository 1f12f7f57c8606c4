#include "prunekit/metering.hpp"

#include <cstdio>
#include <sstream>

namespace prunekit {

std::uint64_t layer_param_count(const Layer& l) {
  const std::uint64_t k2 = static_cast<std::uint64_t>(l.kernel) * l.kernel;
  const std::uint64_t b = l.bias ? 1 : 0;
  switch (l.kind) {
    case LayerKind::Conv:
    case LayerKind::PointwiseConv:
      return (k2 * l.in_channels + b) * l.out_channels;
    case LayerKind::DepthwiseConv:
      return (k2 + b) * l.out_channels;
    case LayerKind::Dense:
      return (static_cast<std::uint64_t>(l.in_channels) + b) * l.out_channels;
    case LayerKind::BatchNorm:
      return 2ull * l.out_channels;
    default:
      return 0;
  }
}

namespace {

std::uint64_t layer_flops(const Layer& l, const Shape& out) {
  const std::uint64_t k2 = static_cast<std::uint64_t>(l.kernel) * l.kernel;
  switch (l.kind) {
    case LayerKind::Conv:
    case LayerKind::PointwiseConv:
      return 2 * k2 * l.in_channels * l.out_channels * out[1] * out[2];
    case LayerKind::DepthwiseConv:
      return 2 * k2 * l.out_channels * out[1] * out[2];
    case LayerKind::Dense:
      return 2ull * l.in_channels * l.out_channels;
    default:
      return 0;
  }
}

std::string shape_cell(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

}  // namespace

double MeterReport::size_mb() const {
  return static_cast<double>(size_bytes()) / static_cast<double>(1u << 20);
}

std::vector<MeterRow> count_params(const ModelGraph& model) {
  std::vector<MeterRow> rows;
  rows.reserve(model.layers.size());
  for (const Layer& l : model.layers) {
    rows.push_back({l.id, l.kind, layer_param_count(l), 0, {}});
  }
  return rows;
}

std::vector<MeterRow> count_flops(const ModelGraph& model, const Shape& input_chw) {
  const auto shapes = model.infer_shapes(input_chw);
  std::vector<MeterRow> rows;
  rows.reserve(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    rows.push_back({l.id, l.kind, 0, layer_flops(l, shapes[i]), shapes[i]});
  }
  return rows;
}

MeterReport meter(const ModelGraph& model, const Shape& input_chw) {
  MeterReport r;
  r.rows = count_flops(model, input_chw);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    r.rows[i].params = layer_param_count(model.layers[i]);
    r.total_params += r.rows[i].params;
    r.total_flops += r.rows[i].flops;
  }
  return r;
}

double size_mb(const ModelGraph& model) {
  MeterReport r;
  for (const Layer& l : model.layers) r.total_params += layer_param_count(l);
  return r.size_mb();
}

std::string format_fixed2(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

std::string meter_csv(const MeterReport& report) {
  std::ostringstream os;
  os << "layer_id,kind,params,flops,out_shape\n";
  std::uint64_t params = 0, flops = 0;
  bool any = false;
  for (const MeterRow& row : report.rows) {
    if (!is_parameterized(row.kind)) continue;
    any = true;
    params += row.params;
    flops += row.flops;
    os << row.layer_id << ',' << to_string(row.kind) << ',' << row.params << ',' << row.flops
       << ',' << shape_cell(row.out_shape) << '\n';
  }
  if (any) os << "TOTAL,total," << params << ',' << flops << ",\n";
  return os.str();
}

nlohmann::json meter_json(const MeterReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const MeterRow& row : report.rows) {
    rows.push_back({{"layer_id", row.layer_id},
                    {"kind", std::string(to_string(row.kind))},
                    {"params", row.params},
                    {"flops", row.flops},
                    {"out_shape", row.out_shape}});
  }
  return {{"rows", rows},
          {"total_params", report.total_params},
          {"total_flops", report.total_flops},
          {"size_bytes", report.size_bytes()},
          {"size_mb", format_fixed2(report.size_mb())},
          {"note", kMeterFootnote}};
}

}  // namespace prunekit
