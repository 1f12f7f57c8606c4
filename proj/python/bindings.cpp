#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "prunekit/checkpoint.hpp"
#include "prunekit/data.hpp"
#include "prunekit/errors.hpp"
#include "prunekit/manifest.hpp"
#include "prunekit/metering.hpp"
#include "prunekit/pipeline.hpp"
#include "prunekit/pruning.hpp"

namespace py = pybind11;
using namespace prunekit;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t) {
  FloatArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.ptr(), t.ptr() + t.numel(), out.mutable_data());
  return out;
}

py::dict meter_dict(const ModelGraph& m) {
  const MeterReport r = meter(m);
  py::list rows;
  for (const auto& row : r.rows) {
    py::dict d;
    d["layer_id"] = row.layer_id;
    d["kind"] = std::string(to_string(row.kind));
    d["params"] = row.params;
    d["flops"] = row.flops;
    d["out_shape"] = row.out_shape;
    rows.append(d);
  }
  py::dict out;
  out["rows"] = rows;
  out["total_params"] = r.total_params;
  out["total_flops"] = r.total_flops;
  out["size_mb"] = r.size_mb();
  return out;
}

PruneRequest request(const std::string& layer, std::optional<std::size_t> m,
                     std::optional<std::size_t> keep) {
  if (m.has_value() == keep.has_value()) throw PlanError("give exactly one of m or keep");
  return {layer, m, keep};
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Filter pruning of CNNs: models, metering, pruning and the command line";

  py::register_exception<ShapeError>(mod, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(mod, "FormatError", PyExc_ValueError);
  py::register_exception<NumericError>(mod, "NumericError", PyExc_ArithmeticError);
  py::register_exception<PlanError>(mod, "PlanError", PyExc_ValueError);

  py::class_<ModelGraph>(mod, "Model")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const ModelGraph& m, const std::filesystem::path& p) { save_checkpoint(m, p); },
           py::arg("path"))
      .def_property_readonly("input_shape", [](const ModelGraph& m) { return m.input_shape; })
      .def_property_readonly("num_classes", [](const ModelGraph& m) { return m.num_classes; })
      .def_readwrite("meta", &ModelGraph::meta)
      .def_property_readonly("layer_ids",
                             [](const ModelGraph& m) {
                               std::vector<std::string> ids;
                               for (const auto& l : m.layers) ids.push_back(l.id);
                               return ids;
                             })
      .def("out_channels", [](const ModelGraph& m, const std::string& id) { return m.layer(id).out_channels; })
      .def("weights",
           [](const ModelGraph& m, const std::string& id, const std::string& name) {
             return to_array(m.layer(id).params.at(name));
           },
           py::arg("layer"), py::arg("name") = "weight")
      .def("meter", &meter_dict)
      .def("params", [](const ModelGraph& m) { return meter(m).total_params; })
      .def("flops", [](const ModelGraph& m) { return meter(m).total_flops; })
      .def("report_csv", [](const ModelGraph& m) { return meter_csv(meter(m)); })
      .def("filter_norms",
           [](const ModelGraph& m, const std::string& id) {
             std::vector<std::pair<std::size_t, double>> out;
             for (const auto& e : compute_norm_profile(m, id).entries) out.emplace_back(e.index, e.norm);
             return out;
           })
      .def("prune",
           [](const ModelGraph& m, const std::string& layer, std::optional<std::size_t> count,
              std::optional<std::size_t> keep) {
             return prune_filters(m, resolve_step(m, request(layer, count, keep)));
           },
           py::arg("layer"), py::arg("m") = py::none(), py::arg("keep") = py::none())
      .def("apply_plan",
           [](const ModelGraph& m, const std::string& plan_json) {
             const auto requests = parse_plan_json(nlohmann::json::parse(plan_json));
             return apply_plan(m, resolve_plan(m, requests));
           },
           py::arg("plan_json"))
      .def("predict",
           [](const ModelGraph& m, const FloatArray& x) {
             Tensor out;
             {
               py::gil_scoped_release release;
               out = predict(m, to_tensor(x));
             }
             return to_array(out);
           },
           py::arg("images"))
      .def("__eq__", [](const ModelGraph& a, const ModelGraph& b) { return a == b; });

  mod.def(
      "build",
      [](const std::string& arch, std::vector<std::size_t> input_shape, std::size_t num_classes,
         double width, bool batchnorm, std::uint64_t seed) {
        BuildOptions o;
        o.input_shape = input_shape;
        o.num_classes = num_classes;
        o.width = width;
        o.batchnorm = batchnorm;
        o.seed = seed;
        return build_architecture(arch, o);
      },
      py::arg("arch"), py::arg("input_shape") = std::vector<std::size_t>{3, 32, 32},
      py::arg("num_classes") = 10, py::arg("width") = 1.0, py::arg("batchnorm") = false,
      py::arg("seed") = 0);

  mod.def(
      "load_dataset",
      [](const std::filesystem::path& dir, const std::string& format, const std::string& split) {
        const DataFormat f = format == "auto" ? detect_data_format(dir) : data_format_from_string(format);
        const Split s = split == "test" ? Split::Test : split == "val" ? Split::Val : Split::Train;
        const LabeledDataset ds = load_dataset(dir, f, s);
        return py::make_tuple(to_array(ds.images),
                              py::array_t<int>(static_cast<py::ssize_t>(ds.labels.size()), ds.labels.data()),
                              ds.num_classes);
      },
      py::arg("dir"), py::arg("format") = "auto", py::arg("split") = "train");

  mod.def("format_fixed2", &format_fixed2);
  mod.def("sha256_file", &sha256_file);
  mod.def("version", [] { return std::string(tool_version()); });
  mod.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "prunekit");
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one CLI command in-process; returns (exit_code, stdout, stderr).");
}
