// dmarl command-line front end.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dmarl/config.hpp"
#include "dmarl/experiment.hpp"
#include "dmarl/graph.hpp"
#include "dmarl/learner.hpp"
#include "dmarl/validation.hpp"

namespace fs = std::filesystem;
using namespace dmarl;

namespace {

// A config file has a [graph] section; anything else is read as a graph file.
CoordinationGraph GraphFromAnyFile(const fs::path& path) {
  const std::string text = ReadTextFile(path);
  for (const auto& e : ParseKeyValueText(text, path.string()))
    if (!e.section.empty() && e.section != "graph")
      return ParseConfig(text, path.parent_path(), path.string()).graph();
  return ParseGraphText(text, path.string());
}

std::string G17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed zeroth-order multi-agent policy search"};
  app.require_subcommand(1);

  std::string graph_path;
  auto* graph_cmd = app.add_subcommand("graph", "Print clusters, reachability sets and learning edges");
  graph_cmd->add_option("file", graph_path, "Graph file or experiment config")->required()->check(CLI::ExistingFile);

  std::string run_cfg, run_output;
  std::optional<std::uint64_t> run_seed;
  int run_jobs = -1;
  bool run_timing = false, run_quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment config");
  run_cmd->add_option("config", run_cfg, "Experiment config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run_seed, "Override experiment.master_seed");
  run_cmd->add_option("--output,-o", run_output,
                      "Output directory (default: $DMARL_OUTPUT_DIR, then experiment.output_dir)");
  run_cmd->add_option("--jobs,-j", run_jobs, "Worker threads (0 = all cores)");
  run_cmd->add_flag("--timing", run_timing, "Record wall-clock columns (output no longer byte-reproducible)");
  run_cmd->add_flag("--quiet,-q", run_quiet, "Only print the final summary");

  std::string sum_dir;
  auto* sum_cmd = app.add_subcommand("summarize", "Recompute summary.csv and variance.csv for a run directory");
  sum_cmd->add_option("dir", sum_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  std::string val_suite = "all";
  bool val_json = false;
  double val_scale = 1.0;
  std::uint64_t val_seed = validation::SuiteOptions{}.seed;
  auto* val_cmd = app.add_subcommand("validate", "Run numerical validation suites");
  std::string suites = "all";
  for (const auto& s : validation::SuiteNames()) suites += ", " + s;
  val_cmd->add_option("--suite", val_suite, "Suite to run: " + suites)
      ->check(CLI::IsMember([] {
        auto v = validation::SuiteNames();
        v.push_back("all");
        return v;
      }()));
  val_cmd->add_flag("--json", val_json, "Emit machine-readable JSON instead of text");
  val_cmd->add_option("--scale", val_scale, "Multiply sample and instance counts")->check(CLI::Range(0.01, 100.0));
  val_cmd->add_option("--seed", val_seed, "Validation seed");

  double s_eps = 0, s_lip = 0;
  std::size_t s_dim = 0, s_epochs = 0;
  std::optional<double> s_b;
  auto* sch_cmd = app.add_subcommand("schedule", "Smoothing radius, step size and required epochs");
  sch_cmd->add_option("--eps", s_eps, "Target accuracy epsilon")->required();
  sch_cmd->add_option("--lip", s_lip, "Lipschitz constant L")->required();
  sch_cmd->add_option("--dim", s_dim, "Total parameter dimension d")->required();
  sch_cmd->add_option("--epochs", s_epochs, "Available epochs K")->required();
  sch_cmd->add_option("--B", s_b, "Constant B; enables the required-epoch count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*graph_cmd) {
      std::cout << DescribeGraph(GraphArtifacts(GraphFromAnyFile(graph_path)));
      return 0;
    }
    if (*run_cmd) {
      ExperimentConfig cfg = LoadConfig(run_cfg);
      if (run_seed) {
        cfg.master_seed = *run_seed;
        cfg.repeat_seeds.clear();
      }
      if (run_jobs >= 0) cfg.jobs = run_jobs;
      if (run_timing) cfg.timing = true;
      std::optional<fs::path> out;
      if (!run_output.empty()) out = run_output;
      if (!run_quiet) std::cout << EchoConfig(cfg) << "\n";
      RunProgress progress;
      if (!run_quiet)
        progress = [](const RunRecord& r) {
          std::cout << (r.aborted ? "aborted " : "done    ") << r.file;
          if (r.aborted) std::cout << ": " << r.error;
          std::cout << "\n" << std::flush;
        };
      const auto result = RunExperiment(cfg, out, progress);
      std::cout << "output: " << result.output_dir.string() << "\n";
      for (const auto& a : result.summary.algorithms)
        std::cout << a.algorithm << ": epoch 0 mean " << G17(a.mean.front()) << ", final mean "
                  << G17(a.final_mean()) << ", final std " << G17(a.final_std()) << "\n";
      std::cout << "messages: " << result.summary.total_messages << "\n";
      if (!result.summary.aborted_runs.empty()) {
        std::cerr << result.summary.aborted_runs.size() << " run(s) aborted\n";
        return 1;
      }
      return 0;
    }
    if (*sum_cmd) {
      const RunSummary s = Summarize(sum_dir);
      for (const auto& a : s.algorithms)
        std::cout << a.algorithm << ": repeats " << a.repeats << ", final mean " << G17(a.final_mean())
                  << ", final std " << G17(a.final_std()) << ", mean std over last " << a.tail_window
                  << " epochs " << G17(a.tail_mean_std) << "\n";
      for (const auto& v : s.variance)
        std::cout << v.flavor << ": distributed " << G17(v.distributed_tail_std) << " vs centralized "
                  << G17(v.centralized_tail_std) << "\n";
      for (const auto& f : s.aborted_runs) std::cout << "aborted: " << f << "\n";
      return 0;
    }
    if (*val_cmd) {
      validation::SuiteOptions opts;
      opts.seed = val_seed;
      opts.scale = val_scale;
      std::vector<std::string> names =
          val_suite == "all" ? validation::SuiteNames() : std::vector<std::string>{val_suite};
      bool ok = true;
      std::string json_out = "[";
      for (std::size_t k = 0; k < names.size(); ++k) {
        const auto rep = validation::RunSuite(names[k], opts);
        ok = ok && rep.passed();
        if (val_json) json_out += (k ? ",\n" : "\n") + rep.ToJson();
        else std::cout << rep.ToText() << std::flush;
      }
      if (val_json) std::cout << json_out << "\n]\n";
      return ok ? 0 : 1;
    }
    if (*sch_cmd) {
      const Schedule s = ConvergenceSchedule(s_eps, s_lip, s_dim, s_epochs, s_b);
      std::cout << "delta = " << G17(s.delta) << "\n"
                << "eta = " << G17(s.step_size) << "\n";
      if (s.required_epochs) std::cout << "K_required = " << G17(*s.required_epochs) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
