// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmarl/config.hpp"
#include "dmarl/experiment.hpp"
#include "dmarl/graph.hpp"
#include "dmarl/learner.hpp"
#include "dmarl/policy.hpp"
#include "dmarl/validation.hpp"
#include "dmarl/warehouse.hpp"

namespace fs = std::filesystem;
using namespace dmarl;

namespace {

const fs::path kSource = DMARL_SOURCE_DIR;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string Fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string SuiteDetail(const validation::SuiteReport& rep) {
  std::string s;
  for (const auto& c : rep.checks) {
    if (!s.empty()) s += "; ";
    s += (c.passed ? "" : "FAILED ") + c.name + ": " + c.detail;
  }
  return s;
}

// 1 -----------------------------------------------------------------------
Outcome GraphStructure() {
  const GraphArtifacts ex2(LoadGraphFile(kSource / "configs/example2.graph"));
  std::set<std::pair<int, int>> expected{{100, 1}};
  for (int i = 2; i <= 100; i += 2) {
    expected.insert({i, i - 1});
    if (i + 1 <= 100) expected.insert({i, i + 1});
  }
  std::set<std::pair<int, int>> got;
  for (const Edge& e : ex2.learning.edges) got.insert({e.from + 1, e.to + 1});
  const bool el_ok = got == expected && ex2.graph.num_agents() == 100;

  const GraphArtifacts ex1(LoadConfig(kSource / "configs/example1.cfg").graph());
  const std::vector<std::vector<AgentId>> clusters{{0, 1}, {2, 3}, {4, 5}, {6, 7, 8}};
  const bool scc_ok = ex1.clusters.clusters == clusters;
  return {el_ok && scc_ok, "Example 2 E_L " + std::string(el_ok ? "matches" : "DIFFERS from") +
                               " the stated set (" + std::to_string(got.size()) + " edges); 9-agent clusters " +
                               (scc_ok ? "{1,2},{3,4},{5,6},{7,8,9}" : "WRONG")};
}

// 6 and 8 share the Example 1 run.
struct ExampleRun {
  ExperimentConfig cfg;
  ExperimentResult result;
};

ExampleRun RunExample(const std::string& name, const fs::path& out_root) {
  ExperimentConfig cfg = LoadConfig(kSource / "configs" / (name + ".cfg"));
  fs::remove_all(out_root / name);
  ExperimentResult res = RunExperiment(cfg, out_root / name);
  return {std::move(cfg), std::move(res)};
}

Outcome Example1Qualitative(const ExampleRun& run) {
  const RunSummary& s = run.result.summary;
  bool ok = s.aborted_runs.empty() && s.algorithms.size() == 4;
  std::string d;
  for (const auto& a : s.algorithms) {
    const bool up = a.final_mean() > a.mean.front();
    ok = ok && up && a.repeats == 10;
    d += a.algorithm + " " + Fmt(a.mean.front(), 4) + " -> " + Fmt(a.final_mean(), 4) + (up ? "" : " (NOT improved)") + "; ";
  }
  for (const auto& v : s.variance) {
    const bool lower = v.distributed_tail_std < v.centralized_tail_std;
    ok = ok && lower;
    d += v.flavor + " tail std distributed " + Fmt(v.distributed_tail_std, 5) + (lower ? " < " : " >= ") +
         "centralized " + Fmt(v.centralized_tail_std, 5) + "; ";
  }
  if (s.variance.size() != 2) ok = false;
  if (d.size() >= 2) d.resize(d.size() - 2);
  return {ok, d};
}

Outcome CommunicationAudit(const ExampleRun& run) {
  const GraphArtifacts art(run.cfg.graph());
  const std::size_t el = art.learning.edges.size();
  std::size_t rows = 0, bad_rows = 0, off_graph = 0, runs = 0;
  for (const auto& r : run.result.runs) {
    ++runs;
    off_graph += r.off_graph_sends;
    if (r.aborted) ++bad_rows;
    const RunCsv csv = ReadRunCsv(run.result.output_dir / r.file);
    for (auto m : csv.message_count) {
      ++rows;
      if (m != el) ++bad_rows;
    }
    if (r.messages_total != el * static_cast<std::size_t>(run.cfg.epochs)) ++bad_rows;
  }
  return {bad_rows == 0 && off_graph == 0 && runs == 40 && rows == 40u * 600u,
          std::to_string(rows) + " episodes over " + std::to_string(runs) + " runs, |E_L| = " + std::to_string(el) +
              ", mismatched counts " + std::to_string(bad_rows) + ", off-graph sends " + std::to_string(off_graph)};
}

// 7 -----------------------------------------------------------------------
Outcome Example2Stability(const ExampleRun& run) {
  const RunSummary& s = run.result.summary;
  bool ok = true;
  std::string d;
  for (const auto& r : run.result.runs) {
    if (r.algorithm.rfind("distributed_", 0) != 0) continue;
    if (r.aborted) {
      ok = false;
      d += r.file + " aborted: " + r.error + "; ";
      continue;
    }
    std::ifstream ck(run.result.output_dir / "checkpoints" /
                         (fs::path(r.file).stem().string() + "_final.bin"),
                     std::ios::binary);
    if (!ReadCheckpointBinary(ck).AllFinite()) {
      ok = false;
      d += r.file + " has non-finite parameters; ";
    }
  }
  for (const char* alg : {"distributed_one_point", "distributed_two_point"}) {
    const auto* a = s.Find(alg);
    if (!a) {
      ok = false;
      d += std::string(alg) + " missing; ";
      continue;
    }
    // 50-epoch moving average read at 50-epoch strides.
    const int w = 50;
    std::vector<double> ma;
    for (int end = w; end <= static_cast<int>(a->mean.size()); end += w) {
      double sum = 0.0;
      for (int k = end - w; k < end; ++k) sum += a->mean[k];
      ma.push_back(sum / w);
    }
    int drops = 0;
    for (std::size_t k = 1; k < ma.size(); ++k) drops += ma[k] < ma[k - 1];
    // Every-epoch sliding window, reported for reference.
    int sliding_drops = 0;
    double prev = 0.0;
    for (int end = w; end <= static_cast<int>(a->mean.size()); ++end) {
      double sum = 0.0;
      for (int k = end - w; k < end; ++k) sum += a->mean[k];
      if (end > w && sum / w < prev) ++sliding_drops;
      prev = sum / w;
    }
    ok = ok && drops == 0;
    d += std::string(alg) + " moving average " + Fmt(ma.front(), 4) + " -> " + Fmt(ma.back(), 4) + ", " +
         std::to_string(drops) + " drops at 50-epoch strides (" + std::to_string(sliding_drops) +
         " sliding one-epoch dips); ";
  }
  const auto* d1 = s.Find("distributed_one_point");
  const auto* c1 = s.Find("centralized_one_point");
  if (d1 && c1) {
    const double ratio = c1->tail_mean_variance / d1->tail_mean_variance;
    ok = ok && ratio >= 2.0;
    d += "one-point cross-repeat variance centralized/distributed = " + Fmt(ratio, 4);
  } else {
    ok = false;
  }
  return {ok, d};
}

// 9 -----------------------------------------------------------------------
Outcome Decoupling() {
  Rng rng = DeriveRng(20220501, {9});
  const int triples = 100, horizon = 8;
  int violations = 0, reached_changed = 0, with_unreached = 0;
  for (int t = 0; t < triples; ++t) {
    const int n = std::uniform_int_distribution<int>(2, 10)(rng);
    const auto graph = validation::RandomGraph(n, 0.15, rng, true);
    const GraphArtifacts art(graph);
    WarehouseConfig cfg(graph);
    const RbfPolicy policy(graph, {});
    PolicyParams theta(policy.BlockDims());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : theta.flat()) v = 0.5 * normal(rng);
    const AgentId i = std::uniform_int_distribution<int>(0, n - 1)(rng);
    PolicyParams moved = theta;
    for (double& v : moved.block(i)) v += normal(rng);
    const NoiseTrace trace = DrawNoise(cfg, horizon, rng);
    const Rollout a = RunRollout(cfg, policy.Bind(theta), horizon, 1.0, trace);
    const Rollout b = RunRollout(cfg, policy.Bind(moved), horizon, 1.0, trace);
    const auto& reach = art.reach.reach_closed[i];
    bool any_unreached = false, reached_diff = false;
    for (AgentId j = 0; j < n; ++j) {
      bool same = a.returns[j] == b.returns[j];
      for (int s = 0; s <= horizon; ++s) same = same && a.stocks[s][j] == b.stocks[s][j];
      for (int s = 0; s < horizon; ++s)
        same = same && a.rewards[s][j] == b.rewards[s][j] && a.actions[s][j] == b.actions[s][j] &&
               a.observations[s][j] == b.observations[s][j] && a.demands[s][j] == b.demands[s][j];
      if (std::binary_search(reach.begin(), reach.end(), j)) {
        reached_diff = reached_diff || !same;
      } else {
        any_unreached = true;
        if (!same) ++violations;
      }
    }
    with_unreached += any_unreached;
    reached_changed += reached_diff;
  }
  return {violations == 0, std::to_string(violations) + " non-reached agents changed over " +
                               std::to_string(triples) + " triples (" + std::to_string(with_unreached) +
                               " had non-reached agents; perturbation changed a reached agent in " +
                               std::to_string(reached_changed) + ")"};
}

// 10 ----------------------------------------------------------------------
Outcome ScheduleCalculator() {
  struct Case {
    double eps, lip;
    std::size_t dim, epochs;
    double b;
    double delta, eta, k_required;
  };
  // Inputs chosen so every substitution has a short exact or singly rounded value.
  const Case cases[] = {
      {1.0, 1.0, 1, 1, 1.0, 1.0, 1.0, 1.0},
      {4.0, 1.0, 4, 16, 2.0, 2.0, 0.25, 1.0},                      // 4/2; 8/(8*4); ceil(64*4/1024)
      {0.25, 0.5, 16, 64, 0.5, 0.125, 0.000244140625, 1048576.0},  // 2^-12; 4096*0.25*2^10
      {1.0, 2.0, 9, 100, 3.0, 1.0 / 6.0, 1.0 / 270.0, 6561.0},     // 27*10; 729*9
      {0.5, 1.0, 1, 4, 1.0, 0.5, 0.1767766952966369, 32.0},        // 2^-2.5; 1/2^-5
  };
  int bad = 0;
  std::string d;
  for (const auto& c : cases) {
    const Schedule s = ConvergenceSchedule(c.eps, c.lip, c.dim, c.epochs, c.b);
    const bool ok = s.delta == c.delta && s.step_size == c.eta && s.required_epochs &&
                    *s.required_epochs == c.k_required;
    bad += !ok;
    if (!ok)
      d += "case eps=" + Fmt(c.eps) + " got (" + Fmt(s.delta, 17) + ", " + Fmt(s.step_size, 17) + ", " +
           Fmt(s.required_epochs.value_or(-1), 17) + "); ";
  }
  return {bad == 0, std::to_string(5 - bad) + " of 5 cases exact" + (d.empty() ? "" : ": " + d)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string output = "acceptance_runs";
  std::set<int> only;
  app.add_option("--output", output, "Directory for experiment outputs");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  const fs::path out_root = output;

  int failures = 0;
  auto report = [&](int id, const std::string& title, double limit_s, const std::function<Outcome()>& fn) {
    if (!only.empty() && !only.count(id)) return;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool passed = o.passed;
    std::string timing = Fmt(secs, 3) + " s";
    if (limit_s > 0) {
      timing += " of " + Fmt(limit_s) + " s";
      if (secs > limit_s) {
        passed = false;
        timing += " (OVER LIMIT)";
      }
    }
    failures += !passed;
    std::cout << (passed ? "PASS" : "FAIL") << " criterion " << id << " " << title << " [" << timing << "]: "
              << o.detail << std::endl;
  };

  report(1, "graph structure", 1.0, GraphStructure);
  report(2, "learning-graph properties", 30.0,
         [] {
           const auto rep = validation::GraphSuite();
           return Outcome{rep.passed(), SuiteDetail(rep)};
         });
  report(3, "local and global block gradients agree", 120.0,
         [] {
           const auto rep = validation::Lemma1Suite();
           return Outcome{rep.passed(), SuiteDetail(rep)};
         });
  report(4, "oracle unbiasedness", 120.0,
         [] {
           const auto rep = validation::UnbiasednessSuite();
           return Outcome{rep.passed(), SuiteDetail(rep)};
         });
  report(5, "second-moment bounds", 120.0,
         [] {
           const auto rep = validation::BoundsSuite();
           return Outcome{rep.passed(), SuiteDetail(rep)};
         });

  std::optional<ExampleRun> ex1;
  report(6, "Example 1 qualitative reproduction", 300.0, [&] {
    ex1.emplace(RunExample("example1", out_root));
    return Example1Qualitative(*ex1);
  });
  report(7, "Example 2 stability", 1200.0, [&] { return Example2Stability(RunExample("example2", out_root)); });
  report(8, "communication audit", 0.0, [&] {
    if (!ex1) ex1.emplace(RunExample("example1", out_root));
    return CommunicationAudit(*ex1);
  });
  report(9, "decoupling under replayed noise", 60.0, Decoupling);
  report(10, "schedule calculator", 0.0, ScheduleCalculator);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
