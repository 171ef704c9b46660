#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmarl/graph.hpp"
#include "dmarl/learner.hpp"
#include "dmarl/oracle.hpp"
#include "dmarl/policy.hpp"
#include "dmarl/warehouse.hpp"

namespace dmarl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One `key = value` line. Keys may repeat (e.g. `edge`).
struct ConfigEntry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};

/// Flat key-value text with `[section]` headers; `#` and `;` start comments.
std::vector<ConfigEntry> ParseKeyValueText(const std::string& text, const std::string& source);

std::string ReadTextFile(const std::filesystem::path& path);

/// Graph text: `num_agents = N` then one `edge = i j` line per edge (1-based).
CoordinationGraph ParseGraphText(const std::string& text, const std::string& source);
CoordinationGraph LoadGraphFile(const std::filesystem::path& path);

struct Algorithm {
  OracleFlavor flavor = OracleFlavor::kOnePoint;
  OracleScope scope = OracleScope::kDistributed;

  std::string Name() const;  // e.g. "distributed_one_point"
  bool operator==(const Algorithm&) const = default;
};

Algorithm ParseAlgorithm(const std::string& name);

struct ExperimentConfig {
  explicit ExperimentConfig(WarehouseConfig environment) : env(std::move(environment)) {}

  std::string graph_file;  // as written in the config; empty when embedded
  WarehouseConfig env;
  RbfPolicy::Options policy;

  int epochs = 0;   // K
  int horizon = 0;  // T
  double discount = 1.0;
  double delta = 0.1;
  double step_size = 0.01;
  MessageBus::Mode bus_mode = MessageBus::Mode::kDirect;

  std::vector<Algorithm> algorithms;
  int repeats = 0;
  std::uint64_t master_seed = 1;
  std::vector<std::uint64_t> repeat_seeds;  // optional per-repeat overrides
  std::string output_dir = "output";
  int checkpoint_interval = 0;  // 0: final checkpoint only
  int jobs = 0;                 // 0: hardware concurrency
  bool timing = false;          // add wall-clock columns

  const CoordinationGraph& graph() const { return env.graph; }
  LearnerConfig Learner(const Algorithm& a) const;
  /// Seed of repeat r: the override if given, else derived from master_seed.
  std::uint64_t RepeatSeed(int r) const;
  void Validate() const;
};

/// Relative graph paths resolve against `base_dir`.
ExperimentConfig ParseConfig(const std::string& text, const std::filesystem::path& base_dir,
                             const std::string& source);
ExperimentConfig LoadConfig(const std::filesystem::path& path);

/// Every resolved field as config text, graph embedded. Parses back to an
/// equivalent config.
std::string EchoConfig(const ExperimentConfig& cfg);

}  // namespace dmarl
