#include "dmarl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace dmarl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFormat = "dmarl-manifest-1";
constexpr const char* kRunSchema = "# dmarl run v1";

std::string G17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string RunStem(const std::string& algorithm, int repeat, int repeats) {
  const int width = std::max<int>(2, static_cast<int>(std::to_string(std::max(repeats - 1, 0)).size()));
  std::string r = std::to_string(repeat);
  if (static_cast<int>(r.size()) < width) r.insert(0, width - r.size(), '0');
  return algorithm + "_r" + r;
}

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double ParseNumber(const std::string& s, const fs::path& path, int line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ExperimentError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

void WriteFileAtomically(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ExperimentError("cannot write '" + tmp.string() + "'");
    out << text;
    if (!out) throw ExperimentError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

struct Task {
  Algorithm algorithm;
  int repeat = 0;
};

RunRecord ExecuteRun(const ExperimentConfig& cfg, const GraphArtifacts& artifacts,
                     const Task& task, const fs::path& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.algorithm = task.algorithm.Name();
  rec.repeat = task.repeat;
  rec.seed = cfg.RepeatSeed(task.repeat);
  const std::string stem = RunStem(rec.algorithm, task.repeat, cfg.repeats);
  rec.file = "runs/" + stem + ".csv";

  const int n = cfg.graph().num_agents();
  std::ofstream csv(out_dir / rec.file, std::ios::binary | std::ios::trunc);
  if (!csv) {
    rec.aborted = true;
    rec.error = "cannot open " + rec.file + " for writing";
    return rec;
  }
  csv << kRunSchema << " algorithm=" << rec.algorithm << " repeat=" << task.repeat
      << " seed=" << rec.seed << " agents=" << n << " epochs=" << cfg.epochs << "\n";
  csv << "epoch";
  for (int i = 1; i <= n; ++i) csv << ",W_" << i;
  csv << ",global_value";
  for (int i = 1; i <= n; ++i) csv << ",gnorm_" << i;
  csv << ",message_count";
  if (cfg.timing) csv << ",wall_clock_seconds";
  csv << "\n";

  try {
    const WarehouseEnvironment env(cfg.env, cfg.policy, cfg.horizon, cfg.discount);
    Learner learner(artifacts, env, cfg.Learner(task.algorithm));
    // Identical streams per repeat: every algorithm sees the same u^k and xi^k.
    Rng pert = DeriveRng(rec.seed, {kPerturbationStream});
    Rng noise = DeriveRng(rec.seed, {kEnvironmentStream});
    const bool direct = cfg.bus_mode == MessageBus::Mode::kDirect;

    auto on_epoch = [&](const EpisodeRecord& r, const PolicyParams& theta) {
      for (const Message& m : learner.bus().audit_log()) {
        const bool ok = direct ? artifacts.learning.has_edge(m.from, m.to)
                               : learner.bus().Allowed(m.from, m.to);
        if (!ok) ++rec.off_graph_sends;
      }
      rec.messages_total += r.message_count;
      csv << r.epoch;
      for (double v : r.observed_values) csv << "," << G17(v);
      csv << "," << G17(r.global_value);
      for (double v : r.gradient_norms) csv << "," << G17(v);
      csv << "," << r.message_count;
      if (cfg.timing) csv << "," << G17(r.wall_clock_seconds);
      csv << "\n";
      if (!csv) throw ExperimentError("write failed for " + rec.file);
      rec.epochs_completed = r.epoch + 1;
      if (cfg.checkpoint_interval > 0 && (r.epoch + 1) % cfg.checkpoint_interval == 0) {
        std::ofstream ck(out_dir / "checkpoints" / (stem + "_k" + std::to_string(r.epoch + 1) + ".bin"),
                         std::ios::binary | std::ios::trunc);
        WriteCheckpointBinary(ck, theta);
      }
    };
    auto result = learner.Train(PolicyParams(env.BlockDims()), pert, noise, on_epoch);
    std::ofstream ck(out_dir / "checkpoints" / (stem + "_final.bin"), std::ios::binary | std::ios::trunc);
    WriteCheckpointBinary(ck, result.final_params);
    if (!ck) throw ExperimentError("cannot write final checkpoint for " + stem);
  } catch (const std::exception& e) {
    rec.aborted = true;
    rec.error = e.what();
    csv << "# aborted after " << rec.epochs_completed << " epochs: " << rec.error << "\n";
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::string ManifestText(const ExperimentConfig& cfg, const GraphArtifacts& artifacts,
                         const std::vector<RunRecord>& runs, std::optional<double> seconds) {
  json m;
  m["format"] = kManifestFormat;
  m["run_schema"] = "dmarl run v1";
  m["num_agents"] = cfg.graph().num_agents();
  m["epochs"] = cfg.epochs;
  m["repeats"] = cfg.repeats;
  m["master_seed"] = cfg.master_seed;
  m["learning_graph_edges"] = artifacts.learning.edges.size();
  json algs = json::array();
  for (const auto& a : cfg.algorithms) algs.push_back(a.Name());
  m["algorithms"] = algs;
  json seeds = json::array();
  for (int r = 0; r < cfg.repeats; ++r) seeds.push_back(cfg.RepeatSeed(r));
  m["repeat_seeds"] = seeds;
  m["config"] = EchoConfig(cfg);
  m["versions"] = {{"dmarl", "1.0.0"}, {"compiler", __VERSION__}, {"cplusplus", __cplusplus}};
  json rs = json::array();
  for (const auto& r : runs) {
    json j{{"algorithm", r.algorithm},
           {"repeat", r.repeat},
           {"seed", r.seed},
           {"file", r.file},
           {"status", r.aborted ? "aborted" : "complete"},
           {"epochs_completed", r.epochs_completed},
           {"messages_total", r.messages_total},
           {"off_graph_sends", r.off_graph_sends}};
    if (r.aborted) j["error"] = r.error;
    if (seconds) j["seconds"] = r.seconds;
    rs.push_back(std::move(j));
  }
  m["runs"] = rs;
  if (seconds) m["wall_clock_seconds"] = *seconds;
  return m.dump(2) + "\n";
}

}  // namespace

const AlgorithmSummary* RunSummary::Find(const std::string& algorithm) const {
  for (const auto& a : algorithms)
    if (a.algorithm == algorithm) return &a;
  return nullptr;
}

std::pair<double, double> MeanAndSampleStd(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

RunCsv ReadRunCsv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ExperimentError("cannot open '" + path.string() + "'");
  RunCsv out;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (lineno == 1) {
        if (line.rfind(kRunSchema, 0) != 0)
          throw ExperimentError(path.string() + ": unsupported run schema");
        out.header_comment = line;
      }
      continue;
    }
    const auto cells = SplitCsv(line);
    if (!have_header) {
      have_header = true;
      columns = cells.size();
      for (const auto& c : cells)
        if (c.rfind("W_", 0) == 0) ++out.num_agents;
      if (out.num_agents == 0 || cells.front() != "epoch")
        throw ExperimentError(path.string() + ": malformed header");
      continue;
    }
    if (cells.size() != columns)
      throw ExperimentError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(columns) + " columns");
    const int n = out.num_agents;
    out.epoch.push_back(static_cast<int>(ParseNumber(cells[0], path, lineno)));
    std::vector<double> w(n), g(n);
    for (int i = 0; i < n; ++i) w[i] = ParseNumber(cells[1 + i], path, lineno);
    out.global_value.push_back(ParseNumber(cells[1 + n], path, lineno));
    for (int i = 0; i < n; ++i) g[i] = ParseNumber(cells[2 + n + i], path, lineno);
    out.message_count.push_back(static_cast<std::size_t>(ParseNumber(cells[2 + 2 * n], path, lineno)));
    out.values.push_back(std::move(w));
    out.gradient_norms.push_back(std::move(g));
  }
  if (!have_header) throw ExperimentError(path.string() + ": empty run file");
  return out;
}

RunSummary Summarize(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ExperimentError("no manifest.json in '" + dir.string() + "'");
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw ExperimentError(manifest_path.string() + ": " + e.what());
  }
  if (m.value("format", "") != kManifestFormat)
    throw ExperimentError(manifest_path.string() + ": not a run manifest");
  const int epochs = m.at("epochs").get<int>();

  RunSummary summary;
  std::vector<std::string> missing;
  std::map<std::string, std::vector<RunCsv>> by_alg;
  for (const auto& r : m.at("runs")) {
    const std::string file = r.at("file").get<std::string>();
    const std::string alg = r.at("algorithm").get<std::string>();
    if (r.at("status").get<std::string>() == "aborted") {
      summary.aborted_runs.push_back(file);
      continue;
    }
    if (!fs::exists(dir / file)) {
      missing.push_back(file);
      continue;
    }
    RunCsv csv = ReadRunCsv(dir / file);
    if (static_cast<int>(csv.global_value.size()) != epochs) {
      missing.push_back(file + " (" + std::to_string(csv.global_value.size()) + " of " +
                        std::to_string(epochs) + " epochs)");
      continue;
    }
    for (auto c : csv.message_count) summary.total_messages += c;
    by_alg[alg].push_back(std::move(csv));
  }
  if (!missing.empty()) {
    std::string msg = "incomplete run directory '" + dir.string() + "'; missing runs:";
    for (const auto& f : missing) msg += "\n  " + f;
    throw ExperimentError(msg);
  }

  std::ostringstream sum_csv;
  sum_csv << "# dmarl summary v1\nalgorithm,epoch,repeats,mean_global_value,std_global_value\n";
  for (const auto& name : m.at("algorithms")) {
    const std::string alg = name.get<std::string>();
    auto it = by_alg.find(alg);
    if (it == by_alg.end() || it->second.empty()) continue;
    AlgorithmSummary a;
    a.algorithm = alg;
    a.repeats = static_cast<int>(it->second.size());
    for (int k = 0; k < epochs; ++k) {
      std::vector<double> v;
      for (const auto& run : it->second) v.push_back(run.global_value[k]);
      const auto [mean, sd] = MeanAndSampleStd(v);
      a.mean.push_back(mean);
      a.std.push_back(sd);
      sum_csv << alg << "," << k << "," << a.repeats << "," << G17(mean) << "," << G17(sd) << "\n";
    }
    a.tail_window = std::min(100, epochs);
    for (int k = epochs - a.tail_window; k < epochs; ++k) {
      a.tail_mean_std += a.std[k];
      a.tail_mean_variance += a.std[k] * a.std[k];
    }
    a.tail_mean_std /= a.tail_window;
    a.tail_mean_variance /= a.tail_window;
    summary.algorithms.push_back(std::move(a));
  }

  std::ostringstream var_csv;
  var_csv << "# dmarl variance v1\n"
             "flavor,distributed_tail_std,centralized_tail_std,distributed_final_std,centralized_final_std\n";
  for (const char* flavor : {"one_point", "two_point", "residual"}) {
    const auto* d = summary.Find(std::string("distributed_") + flavor);
    const auto* c = summary.Find(std::string("centralized_") + flavor);
    if (!d || !c) continue;
    VarianceRow row{flavor, d->tail_mean_std, c->tail_mean_std, d->final_std(), c->final_std()};
    var_csv << row.flavor << "," << G17(row.distributed_tail_std) << "," << G17(row.centralized_tail_std)
            << "," << G17(row.distributed_final_std) << "," << G17(row.centralized_final_std) << "\n";
    summary.variance.push_back(row);
  }
  WriteFileAtomically(dir / "summary.csv", sum_csv.str());
  WriteFileAtomically(dir / "variance.csv", var_csv.str());
  return summary;
}

fs::path ResolveOutputDir(const ExperimentConfig& cfg, const std::optional<fs::path>& override_dir) {
  if (override_dir) return *override_dir;
  if (const char* env = std::getenv("DMARL_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

ExperimentResult RunExperiment(const ExperimentConfig& cfg, const std::optional<fs::path>& override_dir,
                               const RunProgress& progress) {
  cfg.Validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.output_dir = ResolveOutputDir(cfg, override_dir);
  std::error_code ec;
  fs::create_directories(result.output_dir / "runs", ec);
  if (!ec) fs::create_directories(result.output_dir / "checkpoints", ec);
  if (ec) throw ExperimentError("cannot create '" + result.output_dir.string() + "': " + ec.message());

  const GraphArtifacts artifacts(cfg.graph());
  std::vector<Task> tasks;
  for (int r = 0; r < cfg.repeats; ++r)
    for (const auto& a : cfg.algorithms) tasks.push_back({a, r});
  result.runs.resize(tasks.size());

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers =
      std::min<std::size_t>(tasks.size(), cfg.jobs > 0 ? static_cast<std::size_t>(cfg.jobs) : hw);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto work = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      result.runs[t] = ExecuteRun(cfg, artifacts, tasks[t], result.output_dir);
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(result.runs[t]);
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  result.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::optional<double> timing;
  if (cfg.timing) timing = result.wall_clock_seconds;
  WriteFileAtomically(result.output_dir / "manifest.json", ManifestText(cfg, artifacts, result.runs, timing));
  result.summary = Summarize(result.output_dir);
  return result;
}

}  // namespace dmarl
