#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "dmarl/config.hpp"
#include "dmarl/policy.hpp"
#include "dmarl/warehouse.hpp"

using namespace dmarl;

namespace {

WarehouseConfig Chain3() {
  return WarehouseConfig(CoordinationGraph::FromOneBased(3, {{1, 2}, {2, 3}}));
}

LocalPolicy Uniform(const CoordinationGraph& g) {
  return [&g](AgentId i, std::span<const double>) {
    const auto k = g.out_neighbors(i).size();
    return std::vector<double>(k, 1.0 / static_cast<double>(k + 1));
  };
}

}  // namespace

TEST_CASE("demand") {
  CHECK(Demand(0.2, 0, 0.0) == 0.2);
  CHECK(Demand(0.2, 17, 0.0) == doctest::Approx(0.2 * (1 - std::sin(17.0 * 0.0))));
  CHECK(Demand(0.2, 0, 0.1) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(Demand(0.2, 8, 0.05) == doctest::Approx(0.2 * (1 - std::sin(0.4)) + 0.05).epsilon(1e-14));
}

TEST_CASE("config validation") {
  auto cfg = Chain3();
  CHECK_NOTHROW(cfg.Validate());
  cfg.demand_amplitude[1] = 1.0;  // A_i must stay below m_i(0)
  CHECK_THROWS_AS(cfg.Validate(), ContractViolation);
}

TEST_CASE("initial state") {
  auto cfg = Chain3();
  Rng rng(3);
  cfg.fixed_initial_state = true;
  CHECK(Reset(cfg, 4, rng).first.stocks == std::vector<double>{1.0, 1.0, 1.0});

  cfg.fixed_initial_state = false;
  cfg.initial_jitter = 0.0;
  CHECK(Reset(cfg, 4, rng).first.stocks == std::vector<double>{1.0, 1.0, 1.0});

  cfg.initial_jitter = 0.01;
  Rng a(11), b(11);
  const auto ra = Reset(cfg, 4, a), rb = Reset(cfg, 4, b);
  CHECK(ra.first.stocks == rb.first.stocks);
  CHECK(ra.second == rb.second);
  for (double m : ra.first.stocks) CHECK(std::abs(m - 1.0) <= 0.01);
}

TEST_CASE("noise draw count ignores flags") {
  auto cfg = Chain3();
  Rng a(5), b(5);
  DrawNoise(cfg, 6, a);
  cfg.shared_noise = true;
  cfg.clip_noise = true;
  const auto t = DrawNoise(cfg, 6, b);
  CHECK(a() == b());
  for (const auto& row : t.demand_noise) CHECK(row[0] == row[2]);
}

TEST_CASE("step") {
  WarehouseConfig iso(CoordinationGraph::FromOneBased(1, {}));
  const double zero[1] = {0.0};
  auto r = Step({{1.0}, 0}, iso, {{}}, zero);
  CHECK(r.next.stocks[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.rewards[0] == 0.0);
  CHECK(r.next.time == 1);

  r = Step({{-0.5}, 0}, iso, {{}}, zero);
  CHECK(r.rewards[0] == -0.25);
  CHECK(StockReward(0.0) == 0.0);

  // zero demand: shipments only move stock around
  auto cfg = WarehouseConfig(CoordinationGraph::FromOneBased(3, {{1, 2}, {2, 3}, {3, 1}}));
  cfg.demand_amplitude = {0.0, 0.0, 0.0};
  const double none[3] = {0.0, 0.0, 0.0};
  WarehouseState s{{1.5, -0.25, 0.75}, 0};
  const auto step = Step(s, cfg, {{0.3}, {0.9}, {0.0}}, none);
  CHECK(std::accumulate(step.next.stocks.begin(), step.next.stocks.end(), 0.0) ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(step.next.stocks[0] == doctest::Approx(1.5 - 0.45));
  CHECK(step.next.stocks[1] == doctest::Approx(-0.25 + 0.45 + 0.225));
}

TEST_CASE("step rejects malformed actions") {
  auto cfg = Chain3();
  const double none[3] = {0, 0, 0};
  WarehouseState s{{1, 1, 1}, 0};
  CHECK_THROWS_AS(Step(s, cfg, {{0.5}, {0.5}}, none), ContractViolation);
  CHECK_THROWS_AS(Step(s, cfg, {{0.5, 0.1}, {0.5}, {}}, none), ContractViolation);
  CHECK_THROWS_AS(Step(s, cfg, {{1.5}, {0.5}, {}}, none), ContractViolation);
}

TEST_CASE("observation layout") {
  auto cfg = Chain3();
  const std::vector<double> m{0.1, 0.2, 0.3};
  CHECK(Observe(cfg, 1, m, 0.4) == std::vector<double>{0.1, 0.2, 0.4});
  CHECK(Observe(cfg, 0, m, 0.4) == std::vector<double>{0.1, 0.4});
  const auto spec = DescribeEnvironment(cfg, 8, 1.0);
  CHECK(spec.obs_dims == std::vector<int>{2, 3, 3});
  CHECK(spec.action_dims == std::vector<int>{1, 1, 0});
}

TEST_CASE("rollout") {
  auto cfg = Chain3();
  const auto pol = Uniform(cfg.graph);
  Rng rng(9);
  const auto r1 = RunRollout(cfg, pol, 1, 0.9, rng);
  for (int i = 0; i < 3; ++i) CHECK(r1.returns[i] == r1.rewards[0][i]);

  Rng a(21);
  const auto ro = RunRollout(cfg, pol, 8, 0.95, a);
  const auto replay = RunRollout(cfg, pol, 8, 0.95, ro.noise);
  CHECK(replay.stocks == ro.stocks);
  CHECK(replay.rewards == ro.rewards);
  CHECK(replay.returns == ro.returns);
  CHECK(replay.actions == ro.actions);
  CHECK(replay.noise.Fingerprint() == ro.noise.Fingerprint());
  for (int i = 0; i < 3; ++i) {
    std::vector<double> col;
    for (const auto& row : ro.rewards) col.push_back(row[i]);
    CHECK(ro.returns[i] == DiscountedReturn(col, 0.95));
  }
  std::ostringstream os;
  WriteRolloutJsonl(os, ro);
  const std::string text = os.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 8);
}

TEST_CASE("example 1 returns are non-positive") {
  const auto ec = LoadConfig(DMARL_SOURCE_DIR "/configs/example1.cfg");
  const RbfPolicy policy(ec.graph(), ec.policy);
  Rng rng(1);
  PolicyParams theta = policy.ZeroParams();
  std::normal_distribution<double> n01;
  for (double& v : theta.flat()) v = n01(rng);
  const auto ro = RunRollout(ec.env, policy.Bind(theta), 8, 1.0, rng);
  for (double w : ro.returns) CHECK(w <= 0.0);
}
