// Python bindings. Agent indices are 1-based on this side.
#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dmarl/config.hpp"
#include "dmarl/experiment.hpp"
#include "dmarl/graph.hpp"
#include "dmarl/learner.hpp"
#include "dmarl/validation.hpp"

namespace py = pybind11;
using namespace dmarl;

namespace {

std::vector<std::vector<int>> OneBasedSets(const std::vector<std::vector<AgentId>>& sets) {
  std::vector<std::vector<int>> out;
  for (const auto& s : sets) {
    auto& v = out.emplace_back();
    for (AgentId a : s) v.push_back(a + 1);
  }
  return out;
}

py::dict GraphInfo(int num_agents, const std::vector<std::pair<int, int>>& edges) {
  const GraphArtifacts a(CoordinationGraph::FromOneBased(num_agents, edges));
  std::vector<std::pair<int, int>> el;
  for (const Edge& e : a.learning.edges) el.emplace_back(e.from + 1, e.to + 1);
  py::dict d;
  d["num_agents"] = num_agents;
  d["clusters"] = OneBasedSets(a.clusters.clusters);
  d["reach"] = OneBasedSets(a.reach.reach);
  d["reach_closed"] = OneBasedSets(a.reach.reach_closed);
  d["learning_edges"] = el;
  d["description"] = DescribeGraph(a);
  return d;
}

py::dict Summary(const RunSummary& s) {
  py::dict algs;
  for (const auto& a : s.algorithms) {
    py::dict d;
    d["repeats"] = a.repeats;
    d["mean"] = a.mean;
    d["std"] = a.std;
    d["tail_mean_std"] = a.tail_mean_std;
    algs[py::str(a.algorithm)] = d;
  }
  py::dict out;
  out["algorithms"] = algs;
  out["total_messages"] = s.total_messages;
  out["aborted_runs"] = s.aborted_runs;
  return out;
}

}  // namespace

PYBIND11_MODULE(_dmarl, m) {
  m.doc() = "Distributed zeroth-order multi-agent policy search";

  py::register_exception<GraphError>(m, "GraphError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("graph_info", &GraphInfo, py::arg("num_agents"), py::arg("edges"),
        "Clusters, reachability sets and learning edges of a 1-based edge list.");

  m.def(
      "schedule",
      [](double eps, double lip, std::size_t dim, std::size_t epochs, std::optional<double> b) {
        const Schedule s = ConvergenceSchedule(eps, lip, dim, epochs, b);
        py::dict d;
        d["delta"] = s.delta;
        d["eta"] = s.step_size;
        d["required_epochs"] = s.required_epochs;
        return d;
      },
      py::arg("eps"), py::arg("lip"), py::arg("dim"), py::arg("epochs"), py::arg("B") = py::none());

  m.def(
      "load_config", [](const std::string& path) { return EchoConfig(LoadConfig(path)); },
      py::arg("path"), "Resolved config as text.");

  m.def(
      "run",
      [](const std::string& path, const std::string& output, std::optional<int> epochs,
         std::optional<int> repeats, std::optional<std::uint64_t> seed, int jobs) {
        ExperimentConfig cfg = LoadConfig(path);
        if (epochs) cfg.epochs = *epochs;
        if (repeats) {
          cfg.repeats = *repeats;
          cfg.repeat_seeds.clear();
        }
        if (seed) {
          cfg.master_seed = *seed;
          cfg.repeat_seeds.clear();
        }
        cfg.jobs = jobs;
        cfg.Validate();
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = RunExperiment(cfg, std::filesystem::path(output));
        }
        py::dict d = Summary(r.summary);
        d["output_dir"] = r.output_dir.string();
        return d;
      },
      py::arg("config"), py::arg("output"), py::arg("epochs") = py::none(),
      py::arg("repeats") = py::none(), py::arg("seed") = py::none(), py::arg("jobs") = 0);

  m.def(
      "summarize", [](const std::string& dir) { return Summary(Summarize(dir)); }, py::arg("dir"));

  m.def(
      "validate",
      [](const std::string& suite, double scale, std::uint64_t seed) {
        validation::SuiteOptions o;
        o.scale = scale;
        o.seed = seed;
        validation::SuiteReport rep;
        {
          py::gil_scoped_release release;
          rep = validation::RunSuite(suite, o);
        }
        py::list checks;
        for (const auto& c : rep.checks) {
          py::dict d;
          d["name"] = c.name;
          d["passed"] = c.passed;
          d["detail"] = c.detail;
          checks.append(d);
        }
        py::dict d;
        d["suite"] = rep.suite;
        d["passed"] = rep.passed();
        d["checks"] = checks;
        return d;
      },
      py::arg("suite"), py::arg("scale") = 1.0, py::arg("seed") = validation::SuiteOptions{}.seed);

  m.def("suite_names", &validation::SuiteNames);
}
