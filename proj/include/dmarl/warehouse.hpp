#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dmarl/graph.hpp"
#include "dmarl/random.hpp"

namespace dmarl {

class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RolloutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters of the warehouse resource-allocation environment.
struct WarehouseConfig {
  CoordinationGraph graph;
  std::vector<double> initial_stock;     // base m_i(0) before jitter
  double initial_jitter = 0.01;          // m_i(0) = base + U[-b, b]
  std::vector<double> demand_amplitude;  // A_i, 0 < A_i < m_i(0)
  double demand_noise_std = 0.1;         // w_{i,t} ~ N(0, std^2)
  bool clip_noise = false;               // clamp w_{i,t} to +-3 std
  bool shared_noise = false;             // one w_t for all agents
  bool fixed_initial_state = false;      // m_i(0) = base exactly

  explicit WarehouseConfig(CoordinationGraph g, double stock = 1.0, double amplitude = 0.2);

  int num_agents() const { return graph.num_agents(); }

  /// Throws ContractViolation naming the broken constraint.
  void Validate() const;
};

/// Dimensional metadata for one agent population.
struct EnvironmentSpec {
  int num_agents = 0;
  std::vector<int> obs_dims;     // |I_i| + 1
  std::vector<int> action_dims;  // |N_i^out|
  int horizon = 1;
  double discount = 1.0;
};

EnvironmentSpec DescribeEnvironment(const WarehouseConfig& cfg, int horizon, double discount);

struct WarehouseState {
  std::vector<double> stocks;
  int time = 0;
};

/// Every random quantity in one episode, drawn up front. Replaying a trace
/// with the same parameters reproduces a rollout bit for bit.
struct NoiseTrace {
  std::vector<double> initial_jitter;             // [N]
  std::vector<std::vector<double>> demand_noise;  // [T][N]

  std::uint64_t Fingerprint() const;
  friend bool operator==(const NoiseTrace&, const NoiseTrace&) = default;
};

/// Per-agent allocation fractions aligned with graph.out_neighbors(i).
using JointAction = std::vector<std::vector<double>>;

double Demand(double amplitude, int t, double w);

/// d_i(t) for every agent given step t's noise row.
std::vector<double> Demands(const WarehouseConfig& cfg, int t, std::span<const double> noise_row);

/// Draws the full noise trace for a horizon. The number of draws depends only
/// on (N, T), never on the configuration flags, so streams stay aligned.
NoiseTrace DrawNoise(const WarehouseConfig& cfg, int horizon, Rng& rng);

WarehouseState InitialState(const WarehouseConfig& cfg, const NoiseTrace& trace);

std::pair<WarehouseState, NoiseTrace> Reset(const WarehouseConfig& cfg, int horizon, Rng& rng);

/// r = 0 when stock >= 0, else -stock^2.
inline double StockReward(double stock) { return stock >= 0.0 ? 0.0 : -stock * stock; }

struct StepResult {
  WarehouseState next;
  std::vector<double> rewards;  // evaluated on the pre-transition stocks
};

StepResult Step(const WarehouseState& state, const WarehouseConfig& cfg,
                const JointAction& action, std::span<const double> noise_row);

/// Local policy: (agent, observation) -> fractions over out-neighbors.
using LocalPolicy = std::function<std::vector<double>(AgentId, std::span<const double>)>;

struct Rollout {
  int horizon = 0;
  double discount = 1.0;
  std::vector<std::vector<double>> stocks;   // [T+1][N]
  std::vector<std::vector<double>> demands;  // [T][N]
  std::vector<std::vector<double>> rewards;  // [T][N]
  std::vector<std::vector<std::vector<double>>> observations;  // [T][N][obs], optional
  std::vector<JointAction> actions;                            // [T], optional
  std::vector<double> returns;                                 // [N]
  NoiseTrace noise;
};

/// sum_t discount^t r_t accumulated in increasing t.
double DiscountedReturn(std::span<const double> rewards, double discount);

/// Observation o_{i,t} = [stocks of I_i in ascending order, d_i(t)].
std::vector<double> Observe(const WarehouseConfig& cfg, AgentId i,
                            std::span<const double> stocks, double demand);

Rollout RunRollout(const WarehouseConfig& cfg, const LocalPolicy& policy, int horizon,
                   double discount, const NoiseTrace& trace, bool record_trajectory = true);

Rollout RunRollout(const WarehouseConfig& cfg, const LocalPolicy& policy, int horizon,
                   double discount, Rng& rng, bool record_trajectory = true);

/// One JSON object per step: t, stocks, demands, actions (if recorded), rewards.
void WriteRolloutJsonl(std::ostream& os, const Rollout& r);

}  // namespace dmarl
