#include "prunekit/checkpoint.hpp"

#include "container.hpp"
#include "prunekit/errors.hpp"

namespace prunekit {

using nlohmann::json;

namespace {

constexpr std::string_view kTag = "PKPT";

json layer_header(const Layer& l) {
  json params = json::array();
  for (const auto& [name, t] : l.params) params.push_back({{"name", name}, {"shape", t.shape()}});
  json j = {{"id", l.id},           {"kind", std::string(to_string(l.kind))},
            {"in", l.in_channels},  {"out", l.out_channels},
            {"kernel", l.kernel},   {"stride", l.stride},
            {"padding", l.padding}, {"bias", l.bias},
            {"prunable", l.prunable}, {"params", params}};
  if (l.kind == LayerKind::BatchNorm) {
    j["eps"] = l.eps;
    j["momentum"] = l.momentum;
  }
  return j;
}

}  // namespace

void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path) {
  json layers = json::array();
  std::vector<unsigned char> payload;
  for (const Layer& l : model.layers) {
    layers.push_back(layer_header(l));
    for (const auto& [name, t] : l.params) detail::append_f32_le(payload, t.data());
  }
  const json header = {{"input_shape", model.input_shape},
                       {"num_classes", model.num_classes},
                       {"meta", model.meta},
                       {"layers", layers}};
  detail::write_container(path, kTag, kCheckpointVersion, header, payload);
}

ModelGraph load_checkpoint(const std::filesystem::path& path) {
  const detail::Container c = detail::read_container(path, kTag, kCheckpointVersion);
  const std::string where = "'" + path.string() + "'";
  ModelGraph model;
  std::size_t offset = 0;
  try {
    const json& h = c.header;
    model.input_shape = h.at("input_shape").get<Shape>();
    model.num_classes = h.at("num_classes").get<std::size_t>();
    model.meta = h.at("meta").get<std::map<std::string, std::string>>();
    for (const json& jl : h.at("layers")) {
      Layer l;
      l.id = jl.at("id").get<std::string>();
      l.kind = layer_kind_from_string(jl.at("kind").get<std::string>());
      l.in_channels = jl.at("in").get<std::size_t>();
      l.out_channels = jl.at("out").get<std::size_t>();
      l.kernel = jl.at("kernel").get<std::size_t>();
      l.stride = jl.at("stride").get<std::size_t>();
      l.padding = jl.at("padding").get<std::size_t>();
      l.bias = jl.at("bias").get<bool>();
      l.prunable = jl.at("prunable").get<bool>();
      if (l.kind == LayerKind::BatchNorm) {
        l.eps = jl.at("eps").get<float>();
        l.momentum = jl.at("momentum").get<float>();
      }
      const auto expected = expected_param_shapes(l);
      const json& jp = jl.at("params");
      if (jp.size() != expected.size()) {
        throw FormatError(where + ": layer '" + l.id + "' lists " + std::to_string(jp.size()) +
                          " parameters, its kind implies " + std::to_string(expected.size()));
      }
      for (const json& p : jp) {
        const std::string name = p.at("name").get<std::string>();
        const Shape shape = p.at("shape").get<Shape>();
        auto it = expected.find(name);
        if (it == expected.end()) {
          throw FormatError(where + ": layer '" + l.id + "' has unexpected parameter '" + name +
                            "'");
        }
        if (it->second != shape) {
          throw FormatError(where + ": layer '" + l.id + "' parameter '" + name + "' shape " +
                            shape_to_string(shape) + " disagrees with hyperparameters " +
                            shape_to_string(it->second));
        }
        const std::size_t n = shape_numel(shape);
        if (c.payload.size() - offset < n * 4) {
          throw FormatError(where + ": truncated payload at layer '" + l.id + "' parameter '" +
                            name + "'");
        }
        Tensor t(shape);
        detail::read_f32_le(c.payload.data() + offset, n, t.ptr());
        offset += n * 4;
        l.params.emplace(name, std::move(t));
      }
      model.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw FormatError(where + ": malformed header: " + e.what());
  }
  if (offset != c.payload.size()) {
    throw FormatError(where + ": " + std::to_string(c.payload.size() - offset) +
                      " trailing payload bytes");
  }
  try {
    model.validate();
  } catch (const ShapeError& e) {
    throw FormatError(where + ": invalid model: " + e.what());
  }
  return model;
}

}  // namespace prunekit
