#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dmarl/graph.hpp"
#include "dmarl/oracle.hpp"
#include "dmarl/policy.hpp"
#include "dmarl/random.hpp"
#include "dmarl/warehouse.hpp"

namespace dmarl {

class CommunicationViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LearnerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One agent's end-of-episode report. `baseline` carries W_j(theta, xi) for
/// the two-point oracle so that a single message per link suffices.
struct Report {
  double value = 0.0;
  std::optional<double> baseline;
};

struct Message {
  AgentId from;
  AgentId to;
  Report report;
};

/// Delivers reports only along allowed links and records every send.
///
/// In direct mode the allowed links are exactly E_L. In coordinator mode the
/// minimum-index member of each cluster aggregates for the cluster: links are
/// the intra-cluster cliques plus coordinator(B) -> coordinator(A) whenever
/// cluster A reaches cluster B.
class MessageBus {
 public:
  enum class Mode { kDirect, kCoordinator };

  explicit MessageBus(const GraphArtifacts& graph, Mode mode = Mode::kDirect);

  Mode mode() const { return mode_; }
  bool Allowed(AgentId from, AgentId to) const;
  std::size_t num_links() const { return links_.size(); }
  const std::vector<Edge>& links() const { return links_; }

  /// Throws CommunicationViolation naming the link (1-based) if it is not allowed.
  void Send(AgentId from, AgentId to, Report report);

  const std::vector<Message>& mailbox(AgentId i) const { return mailboxes_[i]; }
  const std::vector<Message>& audit_log() const { return log_; }
  std::size_t total_sent() const { return total_sent_; }

  /// Empties mailboxes and the per-episode log; total_sent keeps counting.
  void BeginEpisode();

  const GraphArtifacts& graph() const { return graph_; }

 private:
  const GraphArtifacts& graph_;
  Mode mode_;
  std::vector<Edge> links_;  // sorted
  std::vector<std::vector<Message>> mailboxes_;
  std::vector<Message> log_;
  std::size_t total_sent_ = 0;
};

/// Local values assembled from exchanged reports.
struct LocalValues {
  std::vector<double> value;                   // W^_i = sum_{j in I_i^L} W_j
  std::optional<std::vector<double>> baseline; // same sum over baselines
};

/// One round of communication: every agent reports to the agents that need
/// its return, then each agent sums over I_i^L in ascending agent order.
LocalValues ExchangeRewards(MessageBus& bus, std::span<const double> values,
                            std::optional<std::span<const double>> baselines = std::nullopt);

/// Offline recomputation of W^_i from raw per-agent values.
std::vector<double> LocalValueSums(const ReachabilitySets& r, std::span<const double> values);

/// Anything that maps (theta, noise realization) to per-agent returns W_i.
class ValueEnvironment {
 public:
  virtual ~ValueEnvironment() = default;
  virtual int num_agents() const = 0;
  virtual std::vector<std::size_t> BlockDims() const = 0;
  virtual NoiseTrace DrawNoise(Rng& rng) const = 0;
  virtual std::vector<double> Returns(const PolicyParams& theta, const NoiseTrace& xi) const = 0;
};

/// Warehouse rollouts under an RBF-softmax policy.
class WarehouseEnvironment final : public ValueEnvironment {
 public:
  WarehouseEnvironment(WarehouseConfig cfg, RbfPolicy::Options policy, int horizon,
                       double discount);

  int num_agents() const override { return cfg_.num_agents(); }
  std::vector<std::size_t> BlockDims() const override { return policy_.BlockDims(); }
  NoiseTrace DrawNoise(Rng& rng) const override;
  std::vector<double> Returns(const PolicyParams& theta, const NoiseTrace& xi) const override;

  Rollout Run(const PolicyParams& theta, const NoiseTrace& xi, bool record = true) const;

  const WarehouseConfig& config() const { return cfg_; }
  const RbfPolicy& policy() const { return policy_; }
  int horizon() const { return horizon_; }
  double discount() const { return discount_; }

 private:
  WarehouseConfig cfg_;
  RbfPolicy policy_;
  int horizon_;
  double discount_;
};

struct LearnerConfig {
  double step_size = 0.01;  // eta
  int num_epochs = 1;       // K
  OracleConfig oracle;
  int horizon = 8;          // T
  double discount = 1.0;    // gamma
  MessageBus::Mode bus_mode = MessageBus::Mode::kDirect;
  bool record_noise = false;  // keep each episode's NoiseTrace in its record

  void Validate() const;
};

struct EpisodeRecord {
  int epoch = 0;
  std::vector<double> observed_values;  // W_i(theta^k + delta u^k, xi^k)
  std::vector<double> local_values;     // W^_i
  double global_value = 0.0;            // sum_i W_i
  std::optional<double> base_global_value;  // sum_i W_i(theta^k, xi^k), two-point only
  std::vector<double> gradient_norms;   // ||g_i||
  std::size_t message_count = 0;
  double wall_clock_seconds = 0.0;
  std::vector<double> perturbation;     // u^k
  std::optional<NoiseTrace> noise;
};

/// Optional externally supplied randomness for one episode.
struct EpisodeDraws {
  std::optional<std::vector<double>> perturbation;
  std::optional<NoiseTrace> noise;
};

/// Algorithm 1 over any ValueEnvironment.
class Learner {
 public:
  Learner(const GraphArtifacts& graph, const ValueEnvironment& env, LearnerConfig cfg);

  const LearnerConfig& config() const { return cfg_; }
  const MessageBus& bus() const { return bus_; }

  /// One episode: perturb, roll out, exchange, estimate, update. Draws u^k from
  /// perturbation_rng and xi^k from env_rng unless supplied in `draws`; when
  /// supplied, the corresponding stream is not advanced.
  std::pair<PolicyParams, EpisodeRecord> RunEpisode(const PolicyParams& theta, int epoch,
                                                    Rng& perturbation_rng, Rng& env_rng,
                                                    ResidualState& residual,
                                                    const EpisodeDraws& draws = {});

  struct TrainResult {
    std::vector<EpisodeRecord> records;
    PolicyParams final_params;
  };

  using EpochCallback = std::function<void(const EpisodeRecord&, const PolicyParams&)>;

  /// K sequential episodes. Two learners fed identically seeded streams see
  /// the same u^k and xi^k in every episode.
  TrainResult Train(PolicyParams theta0, Rng& perturbation_rng, Rng& env_rng,
                    const EpochCallback& on_epoch = {});

 private:
  const GraphArtifacts& graph_;
  const ValueEnvironment& env_;
  LearnerConfig cfg_;
  MessageBus bus_;
  std::vector<std::size_t> dims_;
};

/// Step-size and smoothing schedule from the convergence analysis:
///   delta = eps / (L sqrt(d)),  eta = eps^1.5 / (d^1.5 sqrt(K)),
///   K_required = ceil(d^3 B^2 / eps^5) when B is supplied.
struct Schedule {
  double delta;
  double step_size;
  std::optional<double> required_epochs;
};

Schedule ConvergenceSchedule(double eps, double lipschitz, std::size_t dim,
                             std::size_t epochs_available,
                             std::optional<double> b_constant = std::nullopt);

/// B = J^* - J^delta(theta^0) + L^4 (J_0^2 + sigma_0^2) / 2.
double ScheduleConstant(double j_star, double j_delta_theta0, double lipschitz, double j0,
                        double sigma0);

}  // namespace dmarl
