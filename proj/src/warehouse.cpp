#include "dmarl/warehouse.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace dmarl {

WarehouseConfig::WarehouseConfig(CoordinationGraph g, double stock, double amplitude)
    : graph(std::move(g)),
      initial_stock(graph.num_agents(), stock),
      demand_amplitude(graph.num_agents(), amplitude) {}

void WarehouseConfig::Validate() const {
  const auto n = static_cast<std::size_t>(num_agents());
  if (initial_stock.size() != n)
    throw ContractViolation("initial_stock has " + std::to_string(initial_stock.size()) +
                            " entries, expected " + std::to_string(n));
  if (demand_amplitude.size() != n)
    throw ContractViolation("demand_amplitude has " + std::to_string(demand_amplitude.size()) +
                            " entries, expected " + std::to_string(n));
  if (!(initial_jitter >= 0.0)) throw ContractViolation("initial_jitter must be >= 0");
  if (!(demand_noise_std >= 0.0)) throw ContractViolation("demand_noise_std must be >= 0");
  const double slack = fixed_initial_state ? 0.0 : initial_jitter;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(demand_amplitude[i] > 0.0))
      throw ContractViolation("demand_amplitude of agent " + std::to_string(i + 1) +
                              " must be positive");
    if (!(demand_amplitude[i] < initial_stock[i] - slack))
      throw ContractViolation("demand_amplitude A_" + std::to_string(i + 1) +
                              " must be below the initial stock m_" + std::to_string(i + 1) +
                              "(0) for every jitter realization");
  }
}

EnvironmentSpec DescribeEnvironment(const WarehouseConfig& cfg, int horizon, double discount) {
  if (horizon < 1) throw ContractViolation("horizon must be >= 1");
  if (!(discount > 0.0 && discount <= 1.0)) throw ContractViolation("discount must be in (0,1]");
  EnvironmentSpec s;
  s.num_agents = cfg.num_agents();
  s.horizon = horizon;
  s.discount = discount;
  for (AgentId i = 0; i < s.num_agents; ++i) {
    s.obs_dims.push_back(static_cast<int>(cfg.graph.in_neighbors(i).size()) + 2);
    s.action_dims.push_back(static_cast<int>(cfg.graph.out_neighbors(i).size()));
  }
  return s;
}

std::uint64_t NoiseTrace::Fingerprint() const {
  // FNV-1a over the raw bytes of every value, in trace order.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  };
  for (double v : initial_jitter) mix(v);
  for (const auto& row : demand_noise)
    for (double v : row) mix(v);
  return h;
}

double Demand(double amplitude, int t, double w) {
  return amplitude * (1.0 - std::sin(w * static_cast<double>(t))) + w;
}

std::vector<double> Demands(const WarehouseConfig& cfg, int t, std::span<const double> noise_row) {
  std::vector<double> d(cfg.num_agents());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = Demand(cfg.demand_amplitude[i], t, noise_row[i]);
  return d;
}

NoiseTrace DrawNoise(const WarehouseConfig& cfg, int horizon, Rng& rng) {
  const int n = cfg.num_agents();
  NoiseTrace trace;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  trace.initial_jitter.resize(n);
  for (double& j : trace.initial_jitter) j = cfg.initial_jitter * unit(rng);
  const double sd = cfg.demand_noise_std;
  trace.demand_noise.assign(horizon, std::vector<double>(n));
  for (auto& row : trace.demand_noise) {
    for (double& w : row) {
      w = sd * normal(rng);
      if (cfg.clip_noise) w = std::clamp(w, -3.0 * sd, 3.0 * sd);
    }
    if (cfg.shared_noise) std::fill(row.begin() + 1, row.end(), row.front());
  }
  return trace;
}

WarehouseState InitialState(const WarehouseConfig& cfg, const NoiseTrace& trace) {
  WarehouseState s;
  s.stocks = cfg.initial_stock;
  if (!cfg.fixed_initial_state)
    for (std::size_t i = 0; i < s.stocks.size(); ++i) s.stocks[i] += trace.initial_jitter[i];
  return s;
}

std::pair<WarehouseState, NoiseTrace> Reset(const WarehouseConfig& cfg, int horizon, Rng& rng) {
  NoiseTrace trace = DrawNoise(cfg, horizon, rng);
  WarehouseState s = InitialState(cfg, trace);
  return {std::move(s), std::move(trace)};
}

namespace {

void CheckAction(const WarehouseConfig& cfg, const JointAction& action) {
  const int n = cfg.num_agents();
  if (static_cast<int>(action.size()) != n)
    throw ContractViolation("joint action covers " + std::to_string(action.size()) +
                            " agents, expected " + std::to_string(n));
  for (AgentId i = 0; i < n; ++i) {
    const auto& a = action[i];
    if (a.size() != cfg.graph.out_neighbors(i).size())
      throw ContractViolation("agent " + std::to_string(i + 1) + " allocates over " +
                              std::to_string(a.size()) + " neighbors, expected " +
                              std::to_string(cfg.graph.out_neighbors(i).size()));
    double sum = 0.0;
    for (double f : a) {
      if (!(f >= 0.0 && f <= 1.0))
        throw ContractViolation("agent " + std::to_string(i + 1) +
                                " has an allocation fraction outside [0,1]");
      sum += f;
    }
    if (sum > 1.0 + 1e-12)
      throw ContractViolation("agent " + std::to_string(i + 1) + " allocates more than its stock");
  }
}

}  // namespace

StepResult Step(const WarehouseState& state, const WarehouseConfig& cfg,
                const JointAction& action, std::span<const double> noise_row) {
  CheckAction(cfg, action);
  const int n = cfg.num_agents();
  const auto& m = state.stocks;
  StepResult out;
  out.rewards.resize(n);
  out.next.time = state.time + 1;
  out.next.stocks.resize(n);

  // Shipped amount a_ij * m_i, indexed by the sender's out-neighbor slot.
  for (AgentId i = 0; i < n; ++i) {
    out.rewards[i] = StockReward(m[i]);
    double sent = 0.0;
    for (double f : action[i]) sent += f * m[i];
    double received = 0.0;
    for (AgentId j : cfg.graph.in_neighbors(i)) {
      const auto& outs = cfg.graph.out_neighbors(j);
      auto slot = std::lower_bound(outs.begin(), outs.end(), i) - outs.begin();
      received += action[j][slot] * m[j];
    }
    const double d = Demand(cfg.demand_amplitude[i], state.time, noise_row[i]);
    out.next.stocks[i] = m[i] - sent + received - d;
  }
  return out;
}

double DiscountedReturn(std::span<const double> rewards, double discount) {
  double total = 0.0, weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= discount;
  }
  return total;
}

std::vector<double> Observe(const WarehouseConfig& cfg, AgentId i,
                            std::span<const double> stocks, double demand) {
  const auto& in = cfg.graph.in_neighbors(i);
  std::vector<double> o;
  o.reserve(in.size() + 2);
  bool placed = false;
  for (AgentId j : in) {
    if (!placed && i < j) {
      o.push_back(stocks[i]);
      placed = true;
    }
    o.push_back(stocks[j]);
  }
  if (!placed) o.push_back(stocks[i]);
  o.push_back(demand);
  return o;
}

Rollout RunRollout(const WarehouseConfig& cfg, const LocalPolicy& policy, int horizon,
                   double discount, const NoiseTrace& trace, bool record_trajectory) {
  if (horizon < 1) throw ContractViolation("horizon must be >= 1");
  if (static_cast<int>(trace.demand_noise.size()) < horizon)
    throw ContractViolation("noise trace shorter than the horizon");
  const int n = cfg.num_agents();
  Rollout r;
  r.horizon = horizon;
  r.discount = discount;
  r.noise = trace;
  WarehouseState s = InitialState(cfg, trace);
  r.stocks.push_back(s.stocks);
  for (int t = 0; t < horizon; ++t) {
    const auto& row = trace.demand_noise[t];
    std::vector<double> d = Demands(cfg, t, row);
    JointAction action(n);
    std::vector<std::vector<double>> obs;
    if (record_trajectory) obs.resize(n);
    for (AgentId i = 0; i < n; ++i) {
      std::vector<double> o = Observe(cfg, i, s.stocks, d[i]);
      action[i] = policy(i, o);
      if (record_trajectory) obs[i] = std::move(o);
    }
    StepResult step = Step(s, cfg, action, row);
    for (AgentId i = 0; i < n; ++i) {
      if (!std::isfinite(step.next.stocks[i])) {
        std::ostringstream msg;
        msg << "non-finite stock for agent " << i + 1 << " at t=" << t + 1
            << " (previous stock " << s.stocks[i] << ")";
        throw RolloutError(msg.str());
      }
    }
    r.rewards.push_back(std::move(step.rewards));
    r.demands.push_back(std::move(d));
    if (record_trajectory) {
      r.observations.push_back(std::move(obs));
      r.actions.push_back(std::move(action));
    }
    s = std::move(step.next);
    r.stocks.push_back(s.stocks);
  }
  r.returns.resize(n);
  std::vector<double> stream(horizon);
  for (AgentId i = 0; i < n; ++i) {
    for (int t = 0; t < horizon; ++t) stream[t] = r.rewards[t][i];
    r.returns[i] = DiscountedReturn(stream, discount);
  }
  return r;
}

Rollout RunRollout(const WarehouseConfig& cfg, const LocalPolicy& policy, int horizon,
                   double discount, Rng& rng, bool record_trajectory) {
  NoiseTrace trace = DrawNoise(cfg, horizon, rng);
  return RunRollout(cfg, policy, horizon, discount, trace, record_trajectory);
}

void WriteRolloutJsonl(std::ostream& os, const Rollout& r) {
  for (int t = 0; t < r.horizon; ++t) {
    nlohmann::json line;
    line["t"] = t;
    line["stocks"] = r.stocks[t];
    line["demands"] = r.demands[t];
    if (!r.actions.empty()) line["actions"] = r.actions[t];
    line["rewards"] = r.rewards[t];
    os << line.dump() << "\n";
  }
}

}  // namespace dmarl
