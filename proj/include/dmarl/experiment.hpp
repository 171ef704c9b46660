#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmarl/config.hpp"

namespace dmarl {

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Outcome of one (algorithm, repeat) training run.
struct RunRecord {
  std::string algorithm;
  int repeat = 0;
  std::uint64_t seed = 0;
  std::string file;  // relative to the output directory
  bool aborted = false;
  std::string error;
  int epochs_completed = 0;
  std::size_t messages_total = 0;
  std::size_t off_graph_sends = 0;  // audit-log entries outside the allowed links
  double seconds = 0.0;
};

struct AlgorithmSummary {
  std::string algorithm;
  int repeats = 0;  // completed runs used
  std::vector<double> mean;  // per epoch, global value across repeats
  std::vector<double> std;   // sample standard deviation (0 for one repeat)
  int tail_window = 0;
  double tail_mean_std = 0.0;       // std averaged over the last tail_window epochs
  double tail_mean_variance = 0.0;  // std^2 averaged likewise

  double final_mean() const { return mean.back(); }
  double final_std() const { return std.back(); }
};

/// Distributed vs centralized for one oracle flavor.
struct VarianceRow {
  std::string flavor;
  double distributed_tail_std = 0.0;
  double centralized_tail_std = 0.0;
  double distributed_final_std = 0.0;
  double centralized_final_std = 0.0;
};

struct RunSummary {
  std::vector<AlgorithmSummary> algorithms;
  std::vector<VarianceRow> variance;
  std::size_t total_messages = 0;
  std::vector<std::string> aborted_runs;

  const AlgorithmSummary* Find(const std::string& algorithm) const;
};

/// Parsed per-run CSV.
struct RunCsv {
  std::string header_comment;
  int num_agents = 0;
  std::vector<int> epoch;
  std::vector<std::vector<double>> values;  // W_i per epoch
  std::vector<double> global_value;
  std::vector<std::vector<double>> gradient_norms;
  std::vector<std::size_t> message_count;
};

RunCsv ReadRunCsv(const std::filesystem::path& path);

struct ExperimentResult {
  std::filesystem::path output_dir;
  std::vector<RunRecord> runs;
  RunSummary summary;
  double wall_clock_seconds = 0.0;
};

using RunProgress = std::function<void(const RunRecord&)>;

/// Output directory: `override_dir` if set, else $DMARL_OUTPUT_DIR, else the
/// config's output_dir.
std::filesystem::path ResolveOutputDir(const ExperimentConfig& cfg,
                                       const std::optional<std::filesystem::path>& override_dir);

/// Runs every (algorithm, repeat) pair on a worker pool and writes
///   runs/<algorithm>_rNN.csv, checkpoints/, summary.csv, variance.csv, manifest.json.
/// A run that throws is recorded as aborted; the others continue.
ExperimentResult RunExperiment(const ExperimentConfig& cfg,
                               const std::optional<std::filesystem::path>& override_dir = std::nullopt,
                               const RunProgress& progress = {});

/// Recomputes the summary from a run directory's manifest and CSVs and
/// rewrites summary.csv / variance.csv. Throws listing any missing runs.
RunSummary Summarize(const std::filesystem::path& dir);

/// Sample mean and standard deviation (n - 1 denominator; 0 when n < 2).
std::pair<double, double> MeanAndSampleStd(const std::vector<double>& v);

}  // namespace dmarl
