// Python bindings for the core library.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mvaug/augmentation.hpp"
#include "mvaug/diagnostics.hpp"
#include "mvaug/distribution.hpp"
#include "mvaug/harness.hpp"
#include "mvaug/io.hpp"
#include "mvaug/network.hpp"

namespace py = pybind11;
using namespace mvaug;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-view data model, feature-permutation augmentation and two-layer network training.";

  py::enum_<SamplingMode>(m, "SamplingMode")
      .value("IID", SamplingMode::kIid)
      .value("STRATIFIED", SamplingMode::kStratified);

  py::class_<DistParams>(m, "DistParams")
      .def(py::init<>())
      .def_readwrite("d", &DistParams::d)
      .def_readwrite("P", &DistParams::P)
      .def_readwrite("K", &DistParams::K)
      .def_readwrite("rho", &DistParams::rho)
      .def_readwrite("sigma_xi", &DistParams::sigma_xi)
      .def_readwrite("sigma_zeta", &DistParams::sigma_zeta)
      .def_readwrite("alpha", &DistParams::alpha)
      .def_readwrite("p_star", &DistParams::p_star)
      .def_readwrite("p_xi", &DistParams::p_xi)
      .def_readwrite("uniform_feature_patch", &DistParams::uniform_feature_patch)
      .def("validate", [](const DistParams& p) { return validate_params(p); })
      .def("to_json", [](const DistParams& p) { return to_json(p).dump(); });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("params", &Dataset::params)
      .def_readonly("mode", &Dataset::mode)
      .def("__len__", [](const Dataset& ds) { return ds.samples.size(); })
      .def_property_readonly("labels",
                             [](const Dataset& ds) {
                               std::vector<int> y;
                               for (const Sample& s : ds.samples) y.push_back(s.y);
                               return y;
                             })
      .def_property_readonly("views",
                             [](const Dataset& ds) {
                               std::vector<int> k;
                               for (const Sample& s : ds.samples) k.push_back(s.k_star);
                               return k;
                             })
      .def_property_readonly("augmented", [](const Dataset& ds) { return ds.augmented_from.has_value(); })
      .def("patches", [](const Dataset& ds, std::size_t i) {
        if (i >= ds.samples.size()) throw py::index_error("sample index out of range");
        return materialize(ds.samples[i], ds.params);
      });

  m.def("generate_dataset", &generate_dataset, py::arg("params"), py::arg("n"),
        py::arg("mode") = SamplingMode::kIid, py::arg("seed") = 0);
  m.def("augment_dataset", &augment_dataset, py::arg("dataset"));
  m.def("save_dataset", [](const Dataset& ds, const std::string& dir) { save_dataset(ds, dir); });
  m.def("load_dataset", [](const std::string& dir) { return load_dataset(dir); });

  py::class_<Model>(m, "Model")
      .def(py::init<>())
      .def_readwrite("W", &Model::W)
      .def_readwrite("q", &Model::q)
      .def_property_readonly("C", &Model::C)
      .def_property_readonly("d", &Model::d);

  m.def("psi", &psi, py::arg("z"), py::arg("q") = 3);
  m.def("psi_prime", &psi_prime, py::arg("z"), py::arg("q") = 3);
  m.def("init_weights", &init_weights, py::arg("C"), py::arg("d"), py::arg("sigma_0"), py::arg("seed") = 0,
        py::arg("q") = 3);
  m.def("scores", [](const Model& model, const Dataset& ds) { return forward_all(model, prepare(ds)); });
  m.def("loss", [](const Model& model, const Dataset& ds) { return dataset_loss(model, ds); });
  m.def("gradient", [](const Model& model, const Dataset& ds) { return gradient(model, ds); });
  m.def("gd_step", [](const Model& model, const Dataset& ds, double eta) { return gd_step(model, ds, eta); });

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("eta", &TrainConfig::eta)
      .def_readwrite("margin_target", &TrainConfig::margin_target)
      .def_readwrite("max_steps", &TrainConfig::max_steps)
      .def_readwrite("record_every", &TrainConfig::record_every);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("stop_time", &TrainResult::stop_time)
      .def_readonly("model", &TrainResult::model)
      .def_readonly("stop_reason", &TrainResult::stop_reason)
      .def_readonly("final_margins", &TrainResult::final_margins)
      .def_property_readonly("loss_curve", [](const TrainResult& r) {
        std::vector<std::pair<long, double>> out;
        for (const CurvePoint& p : r.curve) out.emplace_back(p.t, p.loss);
        return out;
      });

  m.def(
      "train",
      [](const Dataset& ds, const Model& model, const TrainConfig& config) {
        ProbeOptions off;
        off.enabled = false;
        py::gil_scoped_release release;
        return train(ds, model, config, off);
      },
      py::arg("dataset"), py::arg("model"), py::arg("config") = TrainConfig{});

  m.def("_check_ginit", [](const Model& m0, const Dataset& ds, double sigma_0) {
    return to_json(check_ginit(m0, ds, sigma_0)).dump();
  });
  m.def(
      "_test_error",
      [](const Model& model, const DistParams& params, int n_test, std::uint64_t seed) {
        return to_json(estimate_test_error(model, params, n_test, seed)).dump();
      },
      py::arg("model"), py::arg("params"), py::arg("n_test"), py::arg("seed"));
  m.def("_preset", [](const std::string& kind) {
    return to_json(preset(scenario_kind_from_string(kind))).dump();
  });
  m.def("_run_scenario", [](const std::string& spec_json, std::uint64_t seed) {
    const nlohmann::json j = nlohmann::json::parse(spec_json);
    const ScenarioSpec base =
        j.contains("scenario") ? preset(scenario_kind_from_string(j["scenario"].get<std::string>())) : ScenarioSpec{};
    const ScenarioSpec spec = spec_from_json(j, base);
    py::gil_scoped_release release;
    return to_json(run_scenario(spec, seed)).dump();
  });
}
