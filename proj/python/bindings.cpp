#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "symx/cli.hpp"
#include "symx/crosswalk.hpp"
#include "symx/embedding.hpp"
#include "symx/error.hpp"
#include "symx/evaluation.hpp"
#include "symx/inventory.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
py::object to_python(const json& value) {
  return py::module_::import("json").attr("loads")(value.dump());
}

json from_python(const py::handle& value) {
  return json::parse(py::module_::import("json").attr("dumps")(value).cast<std::string>());
}

std::vector<symx::ScorePair> cells(const std::vector<int>& predicted, const std::vector<int>& actual) {
  if (predicted.size() != actual.size()) throw symx::ValidationError("predicted and actual differ in length");
  std::vector<symx::ScorePair> out;
  out.reserve(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) out.push_back({predicted[i], actual[i]});
  return out;
}

py::dict conversion_dict(const symx::ConversionResult& r) {
  py::dict d;
  d["estimates"] = r.estimates;
  d["method"] = r.method;
  return d;
}

}  // namespace

PYBIND11_MODULE(_symx, m) {
  m.doc() = "Symptom inventory crosswalk core";
  m.attr("__version__") = SYMX_VERSION;
  m.attr("DEFAULT_TAU") = symx::kDefaultTau;

  // Translators run newest first, so subclasses are registered after the base.
  const auto base = py::register_exception<symx::Error>(m, "SymxError", PyExc_RuntimeError);
  py::register_exception<symx::ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<symx::ParseError>(m, "ParseError", base.ptr());
  py::register_exception<symx::VersionError>(m, "VersionError", base.ptr());
  py::register_exception<symx::TransportError>(m, "TransportError", base.ptr());
  py::register_exception<symx::NumericError>(m, "NumericError", base.ptr());

  m.def(
      "load_inventory", [](const std::filesystem::path& path) { return to_python(symx::serialize_inventory(symx::load_inventory(path))); },
      py::arg("path"), "Validated inventory as a dict");

  py::class_<symx::CrosswalkModel>(m, "Model")
      .def_static("load", &symx::load_model_file, py::arg("path"))
      .def_static(
          "from_dict", [](const py::dict& artifact) { return symx::load_model(from_python(artifact)); },
          py::arg("artifact"))
      .def("to_dict", [](const symx::CrosswalkModel& model) { return to_python(symx::save_model(model)); })
      .def("dumps", &symx::dump_model)
      .def_property_readonly("source", &symx::CrosswalkModel::source_inventory_id)
      .def_property_readonly("target", &symx::CrosswalkModel::target_inventory_id)
      .def_readonly("tau", &symx::CrosswalkModel::tau)
      .def_readonly("backend_tag", &symx::CrosswalkModel::backend_tag)
      .def_readonly("version", &symx::CrosswalkModel::version)
      .def("source_items", &symx::CrosswalkModel::source_items)
      .def("target_items", &symx::CrosswalkModel::target_items)
      .def(
          "convert",
          [](const symx::CrosswalkModel& model, const symx::ResponseMap& responses, const std::string& mode,
             std::uint64_t seed) {
            return conversion_dict(symx::convert_participant_seeded(model, responses, symx::parse_mode(mode), seed));
          },
          py::arg("responses"), py::arg("mode") = "deterministic", py::arg("seed") = 0)
      .def("__eq__", [](const symx::CrosswalkModel& a, const symx::CrosswalkModel& b) { return a == b; });

  m.def(
      "convert_score",
      [](int score, const std::array<double, 4>& source, const std::array<double, 4>& target) {
        return symx::convert_score_deterministic(score, symx::Thresholds(source), symx::Thresholds(target));
      },
      py::arg("score"), py::arg("source_cuts"), py::arg("target_cuts"));
  m.def(
      "conversion_distribution",
      [](int score, const std::array<double, 4>& source, const std::array<double, 4>& target) {
        return symx::conversion_distribution(score, symx::Thresholds(source), symx::Thresholds(target));
      },
      py::arg("score"), py::arg("source_cuts"), py::arg("target_cuts"));

  m.def(
      "cosine_similarity",
      [](std::vector<double> u, std::vector<double> v) {
        return symx::cosine_similarity(symx::EmbeddingVector(std::move(u)), symx::EmbeddingVector(std::move(v)));
      },
      py::arg("u"), py::arg("v"));

  m.def(
      "ema", [](const std::vector<int>& p, const std::vector<int>& a) { return symx::ema(cells(p, a)); },
      py::arg("predicted"), py::arg("actual"));
  m.def(
      "mae", [](const std::vector<int>& p, const std::vector<int>& a) { return symx::mae(cells(p, a)); },
      py::arg("predicted"), py::arg("actual"));
  m.def(
      "binary_accuracy",
      [](const std::vector<int>& p, const std::vector<int>& a, int t) { return symx::binary_accuracy(cells(p, a), t); },
      py::arg("predicted"), py::arg("actual"), py::arg("threshold"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = symx::cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the crosswalk command line in-process; returns (exit_code, stdout, stderr)");
}
