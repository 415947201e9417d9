#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "diffnet/config.hpp"
#include "diffnet/error.hpp"
#include "diffnet/harness.hpp"
#include "diffnet/landscape.hpp"
#include "diffnet/stationarity.hpp"
#include "diffnet/topology.hpp"

namespace py = pybind11;
using namespace diffnet;

namespace {

ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  auto config = ExperimentConfig::from_json(doc);
  config.validate();
  return config;
}

py::dict run_record(const RunRecord& record) {
  py::list rows;
  for (const auto& r : record.rows) {
    rows.append(py::make_tuple(r.iter, r.value, r.grad_norm_sq, r.disagreement4,
                               r.region ? to_string(*r.region) : std::string("NA"), r.escaped));
  }
  py::dict out;
  out["config_hash"] = record.config_hash;
  out["rows"] = rows;
  out["escape_iter"] = record.escape_iter ? py::cast(*record.escape_iter) : py::none();
  out["wall_seconds"] = record.wall_seconds;
  return out;
}

}  // namespace

PYBIND11_MODULE(_diffnet, m) {
  m.doc() = "Diffusion learning over graphs: policies, losses and escape experiments.";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  py::class_<Graph>(m, "Graph")
      .def_static("from_edges", &Graph::from_edges, py::arg("agents"), py::arg("edges"))
      .def("size", &Graph::size)
      .def("neighbors", &Graph::neighbors)
      .def("degree", &Graph::degree)
      .def("is_regular", &Graph::is_regular);

  m.def(
      "build_graph",
      [](const std::string& kind, std::size_t agents, std::vector<std::size_t> grid,
         double edge_probability, std::uint64_t seed) {
        TopologySpec spec;
        spec.kind = parse_topology_kind(kind);
        spec.grid = std::move(grid);
        spec.edge_probability = edge_probability;
        spec.seed = seed;
        return make_graph(spec, agents);
      },
      py::arg("kind"), py::arg("agents"), py::arg("grid") = std::vector<std::size_t>{},
      py::arg("edge_probability") = 0.5, py::arg("seed") = 1);

  py::class_<NoiseProfile>(m, "NoiseProfile")
      .def(py::init([](std::vector<double> upper, std::vector<double> lower) {
             NoiseProfile p{std::move(upper), std::move(lower)};
             p.validate();
             return p;
           }),
           py::arg("sigma_sq"), py::arg("sigma_lower_sq"))
      .def_readonly("sigma_sq", &NoiseProfile::sigma_sq)
      .def_readonly("sigma_lower_sq", &NoiseProfile::sigma_lower_sq);

  py::class_<CombinationPolicy>(m, "CombinationPolicy")
      .def(py::init<Eigen::MatrixXd, Graph>(), py::arg("matrix"), py::arg("graph"))
      .def_property_readonly("matrix", &CombinationPolicy::matrix)
      .def_property_readonly("perron", &CombinationPolicy::perron)
      .def_property_readonly("lambda2", &CombinationPolicy::lambda2)
      .def_property_readonly("graph", &CombinationPolicy::graph);

  m.def("uniform_policy", &uniform_policy, py::arg("graph"));
  m.def("asymmetric_mh_policy", &asymmetric_mh_policy, py::arg("graph"), py::arg("noise"));
  m.def("policy_objective", &policy_objective, py::arg("perron"), py::arg("noise"));
  m.def("perron_vector", [](const Eigen::MatrixXd& a) { return perron_vector(a); }, py::arg("matrix"));
  m.def("mixing_rate", [](const Eigen::MatrixXd& a) { return mixing_rate(a); }, py::arg("matrix"));
  m.def(
      "validate_policy",
      [](const Eigen::MatrixXd& a, const Graph& g) {
        const auto report = validate_policy(a, g);
        return py::make_tuple(report.ok(), report.describe());
      },
      py::arg("matrix"), py::arg("graph"));

  py::class_<LossModel, std::shared_ptr<LossModel>>(m, "LossModel")
      .def_property_readonly("name", &LossModel::name)
      .def_property_readonly("dim", &LossModel::dim)
      .def("value", &LossModel::value)
      .def("gradient", &LossModel::gradient)
      .def("hessian", &LossModel::hessian)
      .def("saddle_point", &LossModel::saddle_point);

  py::class_<NNSaddleLoss, LossModel, std::shared_ptr<NNSaddleLoss>>(m, "NNSaddleLoss")
      .def(py::init<std::size_t, double, double>(), py::arg("features"), py::arg("reg") = 0.01,
           py::arg("shift") = 0.5)
      .def("origin_min_eigenvalue", &NNSaddleLoss::origin_min_eigenvalue);

  py::class_<QuadraticLoss, LossModel, std::shared_ptr<QuadraticLoss>>(m, "QuadraticLoss")
      .def(py::init<Eigen::MatrixXd>(), py::arg("curvature"))
      .def_static("diagonal", &QuadraticLoss::diagonal, py::arg("diag"));

  m.def("check_gradient", &check_gradient, py::arg("loss"), py::arg("w"));
  m.def("check_hessian", &check_hessian, py::arg("loss"), py::arg("w"));
  m.def("min_eigenvalue", &min_eigenvalue, py::arg("matrix"));

  m.def(
      "run",
      [](const std::string& config) {
        const auto c = parse_config(config);
        py::gil_scoped_release release;
        auto record = cmd_run(c);
        py::gil_scoped_acquire acquire;
        return run_record(record);
      },
      py::arg("config_json"), "Single run; writes <out>/metrics.csv.");

  m.def(
      "policy",
      [](const std::string& config) {
        const auto r = cmd_policy(parse_config(config));
        py::dict out;
        out["label"] = r.label;
        out["matrix"] = r.matrix;
        out["perron"] = r.perron;
        out["lambda2"] = r.lambda2;
        out["objective"] = r.objective ? py::cast(*r.objective) : py::none();
        out["uniform_objective"] = r.uniform_objective ? py::cast(*r.uniform_objective) : py::none();
        return out;
      },
      py::arg("config_json"), "Policy report; writes <out>/policy.csv and policy.json.");

  m.def(
      "sweep",
      [](const std::string& config) {
        const auto c = parse_config(config);
        SweepResult result;
        {
          py::gil_scoped_release release;
          result = cmd_sweep(c);
        }
        py::list cells;
        for (const auto& cell : result.cells) {
          py::dict d;
          d["K"] = cell.agents;
          d["policy"] = cell.policy;
          d["median"] = cell.stats.median;
          d["q1"] = cell.stats.q1;
          d["q3"] = cell.stats.q3;
          d["censored"] = cell.stats.censored_count;
          d["objective"] = cell.objective ? py::cast(*cell.objective) : py::none();
          d["mu_effective"] = cell.mu_effective;
          cells.append(d);
        }
        py::dict slopes;
        for (const auto& f : result.fits) slopes[py::str(f.policy)] = f.fit ? py::cast(f.fit->slope) : py::none();
        py::dict out;
        out["cells"] = cells;
        out["slopes"] = slopes;
        return out;
      },
      py::arg("config_json"), "Escape-time sweep; writes escape.csv, summary.json and plots.");

  m.def(
      "check",
      [](const std::string& config) {
        const auto report = cmd_check(parse_config(config));
        py::list items;
        for (const auto& i : report.items) items.append(py::make_tuple(i.name, i.passed, i.detail));
        return items;
      },
      py::arg("config_json"), "Verification suite; list of (name, passed, detail).");

  m.def(
      "config_hash", [](const std::string& config) { return parse_config(config).hash(); },
      py::arg("config_json"));
}
