#include "dmarl/learner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace dmarl {

namespace {

std::string LinkName(AgentId from, AgentId to) {
  std::ostringstream os;
  os << "(" << from + 1 << "," << to + 1 << ")";
  return os.str();
}

AgentId Coordinator(const ClusterDecomposition& d, int cluster) {
  return d.clusters[cluster].front();
}

// Clusters strictly reachable from cluster c, ascending.
std::vector<int> ReachedClusters(const GraphArtifacts& a, int c) {
  std::vector<int> out;
  for (AgentId j : a.reach.reach[Coordinator(a.clusters, c)]) {
    int cj = a.clusters.cluster_of[j];
    if (cj != c) out.push_back(cj);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

MessageBus::MessageBus(const GraphArtifacts& graph, Mode mode)
    : graph_(graph), mode_(mode), mailboxes_(graph.graph.num_agents()) {
  if (mode_ == Mode::kDirect) {
    links_ = graph.learning.edges;
    return;
  }
  const auto& d = graph.clusters;
  for (int c = 0; c < static_cast<int>(d.size()); ++c) {
    for (AgentId a : d.clusters[c])
      for (AgentId b : d.clusters[c])
        if (a != b) links_.push_back({a, b});
    for (int reached : ReachedClusters(graph, c))
      links_.push_back({Coordinator(d, reached), Coordinator(d, c)});
  }
  std::sort(links_.begin(), links_.end());
}

bool MessageBus::Allowed(AgentId from, AgentId to) const {
  return std::binary_search(links_.begin(), links_.end(), Edge{from, to});
}

void MessageBus::Send(AgentId from, AgentId to, Report report) {
  const int n = static_cast<int>(mailboxes_.size());
  if (from < 0 || from >= n || to < 0 || to >= n || !Allowed(from, to))
    throw CommunicationViolation("attempted send over " + LinkName(from, to) +
                                 ", which is not a learning-graph link");
  Message m{from, to, report};
  mailboxes_[to].push_back(m);
  log_.push_back(m);
  ++total_sent_;
}

void MessageBus::BeginEpisode() {
  for (auto& box : mailboxes_) box.clear();
  log_.clear();
}

namespace {

double BaselineOf(std::optional<std::span<const double>> b, AgentId j) {
  return b ? (*b)[j] : 0.0;
}

LocalValues ExchangeDirect(MessageBus& bus, std::span<const double> values,
                           std::optional<std::span<const double>> baselines) {
  const auto& a = bus.graph();
  const int n = a.graph.num_agents();
  for (AgentId i = 0; i < n; ++i)
    for (AgentId j : a.learning.in_neighbors[i]) {
      Report r{values[j], std::nullopt};
      if (baselines) r.baseline = (*baselines)[j];
      bus.Send(j, i, r);
    }

  LocalValues out;
  out.value.resize(n);
  if (baselines) out.baseline.emplace(n);
  for (AgentId i = 0; i < n; ++i) {
    const auto& box = bus.mailbox(i);
    std::size_t next = 0;
    double sum = 0.0, base = 0.0;
    for (AgentId j : a.reach.reach_closed[i]) {
      if (j == i) {
        sum += values[i];
        base += BaselineOf(baselines, i);
        continue;
      }
      // Mailbox is filled in ascending sender order, same as I_i^L.
      if (next >= box.size() || box[next].from != j)
        throw CommunicationViolation("agent " + std::to_string(i + 1) +
                                     " is missing the report of agent " + std::to_string(j + 1));
      sum += box[next].report.value;
      base += box[next].report.baseline.value_or(0.0);
      ++next;
    }
    out.value[i] = sum;
    if (baselines) (*out.baseline)[i] = base;
  }
  return out;
}

LocalValues ExchangeViaCoordinators(MessageBus& bus, std::span<const double> values,
                                    std::optional<std::span<const double>> baselines) {
  const auto& a = bus.graph();
  const auto& d = a.clusters;
  const int n = a.graph.num_agents();
  const int nc = static_cast<int>(d.size());

  // 1. members report to their coordinator; coordinators form cluster sums.
  std::vector<double> csum(nc, 0.0), cbase(nc, 0.0);
  for (int c = 0; c < nc; ++c) {
    const AgentId coord = Coordinator(d, c);
    for (AgentId m : d.clusters[c])
      if (m != coord) {
        Report r{values[m], std::nullopt};
        if (baselines) r.baseline = (*baselines)[m];
        bus.Send(m, coord, r);
      }
    csum[c] = values[coord];
    cbase[c] = BaselineOf(baselines, coord);
    for (const Message& msg : bus.mailbox(coord)) {
      csum[c] += msg.report.value;
      cbase[c] += msg.report.baseline.value_or(0.0);
    }
  }
  // 2. coordinators forward cluster sums upstream.
  std::vector<double> cluster_value(nc), cluster_base(nc);
  for (int c = 0; c < nc; ++c) {
    double v = csum[c], b = cbase[c];
    for (int reached : ReachedClusters(a, c)) {
      Report r{csum[reached], std::nullopt};
      if (baselines) r.baseline = cbase[reached];
      bus.Send(Coordinator(d, reached), Coordinator(d, c), r);
      v += r.value;
      b += r.baseline.value_or(0.0);
    }
    cluster_value[c] = v;
    cluster_base[c] = b;
  }
  // 3. coordinators broadcast the shared local value inside the cluster.
  LocalValues out;
  out.value.resize(n);
  if (baselines) out.baseline.emplace(n);
  for (int c = 0; c < nc; ++c) {
    const AgentId coord = Coordinator(d, c);
    for (AgentId m : d.clusters[c]) {
      if (m != coord) {
        Report r{cluster_value[c], std::nullopt};
        if (baselines) r.baseline = cluster_base[c];
        bus.Send(coord, m, r);
      }
      out.value[m] = cluster_value[c];
      if (baselines) (*out.baseline)[m] = cluster_base[c];
    }
  }
  return out;
}

}  // namespace

LocalValues ExchangeRewards(MessageBus& bus, std::span<const double> values,
                            std::optional<std::span<const double>> baselines) {
  const auto n = static_cast<std::size_t>(bus.graph().graph.num_agents());
  if (values.size() != n || (baselines && baselines->size() != n))
    throw LearnerError("exchange needs one value per agent");
  return bus.mode() == MessageBus::Mode::kDirect ? ExchangeDirect(bus, values, baselines)
                                                 : ExchangeViaCoordinators(bus, values, baselines);
}

std::vector<double> LocalValueSums(const ReachabilitySets& r, std::span<const double> values) {
  std::vector<double> out(r.reach_closed.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double sum = 0.0;
    for (AgentId j : r.reach_closed[i]) sum += values[j];
    out[i] = sum;
  }
  return out;
}

WarehouseEnvironment::WarehouseEnvironment(WarehouseConfig cfg, RbfPolicy::Options policy,
                                           int horizon, double discount)
    : cfg_(std::move(cfg)), policy_(cfg_.graph, policy), horizon_(horizon), discount_(discount) {
  cfg_.Validate();
  DescribeEnvironment(cfg_, horizon_, discount_);  // validates horizon and discount
}

NoiseTrace WarehouseEnvironment::DrawNoise(Rng& rng) const {
  return dmarl::DrawNoise(cfg_, horizon_, rng);
}

Rollout WarehouseEnvironment::Run(const PolicyParams& theta, const NoiseTrace& xi,
                                  bool record) const {
  return RunRollout(cfg_, policy_.Bind(theta), horizon_, discount_, xi, record);
}

std::vector<double> WarehouseEnvironment::Returns(const PolicyParams& theta,
                                                  const NoiseTrace& xi) const {
  return Run(theta, xi, false).returns;
}

void LearnerConfig::Validate() const {
  // 0 is allowed: a frozen learner still rolls out and reports
  if (!(step_size >= 0.0) || !std::isfinite(step_size))
    throw LearnerError("step size must be non-negative and finite");
  if (num_epochs < 1) throw LearnerError("number of epochs must be >= 1");
  if (horizon < 1) throw LearnerError("horizon must be >= 1");
  if (!(discount > 0.0 && discount <= 1.0)) throw LearnerError("discount must be in (0,1]");
  oracle.Validate();
}

Learner::Learner(const GraphArtifacts& graph, const ValueEnvironment& env, LearnerConfig cfg)
    : graph_(graph), env_(env), cfg_(cfg), bus_(graph, cfg.bus_mode), dims_(env.BlockDims()) {
  cfg_.Validate();
  if (env_.num_agents() != graph_.graph.num_agents())
    throw LearnerError("environment and coordination graph disagree on the number of agents");
}

std::pair<PolicyParams, EpisodeRecord> Learner::RunEpisode(const PolicyParams& theta, int epoch,
                                                           Rng& perturbation_rng, Rng& env_rng,
                                                           ResidualState& residual,
                                                           const EpisodeDraws& draws) {
  const auto start = std::chrono::steady_clock::now();
  const int n = graph_.graph.num_agents();
  const double delta = cfg_.oracle.delta;
  if (theta.dims() != dims_) throw LearnerError("parameter layout does not match the environment");

  std::vector<double> u =
      draws.perturbation ? *draws.perturbation : SamplePerturbation(dims_, perturbation_rng);
  NoiseTrace xi = draws.noise ? *draws.noise : env_.DrawNoise(env_rng);

  const PolicyParams perturbed = Perturb(theta, delta, u);
  const std::vector<double> w = env_.Returns(perturbed, xi);
  std::optional<std::vector<double>> w_base;
  if (cfg_.oracle.flavor == OracleFlavor::kTwoPoint) w_base = env_.Returns(theta, xi);

  bus_.BeginEpisode();
  std::optional<std::span<const double>> base_span;
  if (w_base) base_span = std::span<const double>(*w_base);
  LocalValues local = ExchangeRewards(bus_, w, base_span);

  std::vector<double> used = local.value;
  std::optional<std::vector<double>> used_base = local.baseline;
  if (cfg_.oracle.scope == OracleScope::kCentralized) {
    used.assign(n, CentralizedValue(w, n));
    if (w_base) used_base = std::vector<double>(n, CentralizedValue(*w_base, n));
  }

  GradientEstimate g;
  switch (cfg_.oracle.flavor) {
    case OracleFlavor::kOnePoint:
      g = OnePoint(used, u, dims_, delta);
      break;
    case OracleFlavor::kTwoPoint: {
      const auto tag = xi.Fingerprint();
      g = TwoPoint(used, *used_base, u, dims_, delta, tag, tag);
      break;
    }
    case OracleFlavor::kResidual:
      g = Residual(used, residual, u, dims_, delta);
      break;
  }

  PolicyParams next = theta;
  auto nv = next.flat();
  auto gv = g.blocks.flat();
  for (std::size_t k = 0; k < nv.size(); ++k) nv[k] += cfg_.step_size * gv[k];
  if (!next.AllFinite()) {
    for (std::size_t i = 0; i < next.num_blocks(); ++i)
      for (double v : next.block(i))
        if (!std::isfinite(v))
          throw LearnerError("non-finite parameters for agent " + std::to_string(i + 1) +
                             " after epoch " + std::to_string(epoch));
  }

  EpisodeRecord rec;
  rec.epoch = epoch;
  rec.observed_values = w;
  rec.local_values = std::move(local.value);
  rec.global_value = CentralizedValue(w, n);
  if (w_base) rec.base_global_value = CentralizedValue(*w_base, n);
  rec.gradient_norms = g.BlockNorms();
  rec.message_count = bus_.audit_log().size();
  rec.perturbation = std::move(u);
  if (cfg_.record_noise) rec.noise = std::move(xi);
  rec.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(next), std::move(rec)};
}

Learner::TrainResult Learner::Train(PolicyParams theta0, Rng& perturbation_rng, Rng& env_rng,
                                    const EpochCallback& on_epoch) {
  TrainResult out;
  out.records.reserve(cfg_.num_epochs);
  ResidualState residual;
  PolicyParams theta = std::move(theta0);
  for (int k = 0; k < cfg_.num_epochs; ++k) {
    auto [next, rec] = RunEpisode(theta, k, perturbation_rng, env_rng, residual);
    theta = std::move(next);
    if (on_epoch) on_epoch(rec, theta);
    out.records.push_back(std::move(rec));
  }
  out.final_params = std::move(theta);
  return out;
}

Schedule ConvergenceSchedule(double eps, double lipschitz, std::size_t dim,
                             std::size_t epochs_available, std::optional<double> b_constant) {
  if (!(eps > 0.0)) throw LearnerError("epsilon must be positive");
  if (!(lipschitz > 0.0)) throw LearnerError("Lipschitz constant must be positive");
  if (dim < 1) throw LearnerError("dimension must be positive");
  if (epochs_available < 1) throw LearnerError("number of epochs must be positive");
  if (b_constant && !(*b_constant >= 0.0)) throw LearnerError("B must be non-negative");
  const double d = static_cast<double>(dim);
  Schedule s;
  s.delta = eps / (lipschitz * std::sqrt(d));
  s.step_size = std::pow(eps, 1.5) / (std::pow(d, 1.5) * std::sqrt(static_cast<double>(epochs_available)));
  if (b_constant) s.required_epochs = std::ceil(d * d * d * (*b_constant) * (*b_constant) / std::pow(eps, 5.0));
  return s;
}

double ScheduleConstant(double j_star, double j_delta_theta0, double lipschitz, double j0,
                        double sigma0) {
  const double l2 = lipschitz * lipschitz;
  return j_star - j_delta_theta0 + l2 * l2 * (j0 * j0 + sigma0 * sigma0) / 2.0;
}

}  // namespace dmarl
