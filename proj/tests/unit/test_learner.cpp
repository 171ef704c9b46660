#include <doctest.h>

#include <cmath>

#include "dmarl/config.hpp"
#include "dmarl/learner.hpp"
#include "dmarl/validation.hpp"

using namespace dmarl;

namespace {

double Norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

LearnerConfig Cfg(OracleFlavor f, OracleScope s, double delta, double eta, int epochs) {
  LearnerConfig c;
  c.oracle = {delta, f, s};
  c.step_size = eta;
  c.num_epochs = epochs;
  return c;
}

}  // namespace

TEST_CASE("reward exchange") {
  const GraphArtifacts chain(CoordinationGraph::FromOneBased(3, {{1, 2}, {2, 3}}));
  MessageBus bus(chain);
  const std::vector<double> w{1.0, 2.0, 4.0};
  const auto lv = ExchangeRewards(bus, w);
  CHECK(lv.value == std::vector<double>{7.0, 6.0, 4.0});
  CHECK(bus.audit_log().size() == 3);
  CHECK(LocalValueSums(chain.reach, w) == lv.value);

  const GraphArtifacts empty(CoordinationGraph::FromOneBased(3, {}));
  MessageBus quiet(empty);
  CHECK(ExchangeRewards(quiet, w).value == w);
  CHECK(quiet.audit_log().empty());

  const GraphArtifacts ring(CoordinationGraph::FromOneBased(3, {{1, 2}, {2, 3}, {3, 1}}));
  MessageBus all(ring);
  const std::vector<double> base{0.5, 0.25, 0.125};
  const auto full = ExchangeRewards(all, w, std::span<const double>(base));
  CHECK(full.value == std::vector<double>{7.0, 7.0, 7.0});
  REQUIRE(full.baseline);
  CHECK(*full.baseline == std::vector<double>{0.875, 0.875, 0.875});
  CHECK(all.audit_log().size() == 6);  // baseline rides along, no extra messages
}

TEST_CASE("bus rejects off-graph sends") {
  const GraphArtifacts chain(CoordinationGraph::FromOneBased(3, {{1, 2}, {2, 3}}));
  MessageBus bus(chain);
  CHECK(bus.Allowed(2, 0));
  CHECK_FALSE(bus.Allowed(0, 2));
  CHECK_THROWS_AS(bus.Send(0, 2, {1.0, {}}), CommunicationViolation);
  CHECK_THROWS_AS(bus.Send(0, 7, {1.0, {}}), CommunicationViolation);
  bus.Send(2, 0, {1.0, {}});
  CHECK(bus.mailbox(0).size() == 1);
  bus.BeginEpisode();
  CHECK(bus.mailbox(0).empty());
  CHECK(bus.audit_log().empty());
  CHECK(bus.total_sent() == 1);
}

TEST_CASE("coordinator mode gives the same local values") {
  const GraphArtifacts fig(LoadGraphFile(DMARL_SOURCE_DIR "/configs/fig1.graph"));
  MessageBus direct(fig), coord(fig, MessageBus::Mode::kCoordinator);
  std::vector<double> w(9);
  for (int i = 0; i < 9; ++i) w[i] = 0.5 * i - 1.0;
  CHECK(ExchangeRewards(coord, w).value == ExchangeRewards(direct, w).value);
  for (const auto& m : coord.audit_log()) CHECK(coord.Allowed(m.from, m.to));
}

TEST_CASE("episodes on the warehouse") {
  const auto ec = LoadConfig(DMARL_SOURCE_DIR "/configs/example1.cfg");
  const GraphArtifacts art(ec.graph());
  const WarehouseEnvironment env(ec.env, ec.policy, ec.horizon, ec.discount);
  const PolicyParams theta0 = RbfPolicy(ec.graph(), ec.policy).ZeroParams();

  SUBCASE("zero step size keeps theta") {
    Learner l(art, env, Cfg(OracleFlavor::kTwoPoint, OracleScope::kDistributed, 0.3, 0.0, 1));
    Rng p(1), e(2);
    ResidualState rs;
    const auto [next, rec] = l.RunEpisode(theta0, 0, p, e, rs);
    CHECK(next == theta0);
    CHECK(rec.observed_values.size() == 9);
    CHECK(rec.local_values.size() == 9);
    CHECK(rec.gradient_norms.size() == 9);
    CHECK(rec.perturbation.size() == theta0.total_dim());
    CHECK(rec.base_global_value.has_value());
    CHECK(rec.message_count == art.learning.edges.size());
    CHECK(rec.message_count == 38);
    double sum = 0.0;
    for (double v : rec.observed_values) sum += v;
    CHECK(rec.global_value == sum);
  }

  SUBCASE("same seeds, same records") {
    for (auto scope : {OracleScope::kDistributed, OracleScope::kCentralized}) {
      Learner a(art, env, Cfg(OracleFlavor::kResidual, scope, 0.3, 0.005, 5));
      Learner b(art, env, Cfg(OracleFlavor::kResidual, scope, 0.3, 0.005, 5));
      Rng p1(4), e1(5), p2(4), e2(5);
      const auto ra = a.Train(theta0, p1, e1), rb = b.Train(theta0, p2, e2);
      REQUIRE(ra.records.size() == 5);
      CHECK(ra.final_params == rb.final_params);
      for (int k = 0; k < 5; ++k) {
        CHECK(ra.records[k].epoch == k);
        CHECK(ra.records[k].observed_values == rb.records[k].observed_values);
        CHECK(ra.records[k].perturbation == rb.records[k].perturbation);
      }
    }
  }

  SUBCASE("single epoch") {
    Learner l(art, env, Cfg(OracleFlavor::kOnePoint, OracleScope::kDistributed, 0.3, 0.005, 1));
    Rng p(1), e(2);
    CHECK(l.Train(theta0, p, e).records.size() == 1);
  }
}

TEST_CASE("no shortage means no gradient") {
  // Isolated agents, small demand, no noise: stocks stay positive, rewards are 0.
  WarehouseConfig w(CoordinationGraph::FromOneBased(3, {}), 1.0, 0.05);
  w.demand_noise_std = 0.0;
  const GraphArtifacts art(w.graph);
  const WarehouseEnvironment env(w, {}, 6, 1.0);
  const PolicyParams theta0 = env.policy().ZeroParams();
  Learner l(art, env, Cfg(OracleFlavor::kOnePoint, OracleScope::kDistributed, 0.5, 0.1, 3));
  Rng p(3), e(4);
  const auto r = l.Train(theta0, p, e);
  CHECK(r.final_params == theta0);
  for (const auto& rec : r.records) {
    CHECK(rec.global_value == 0.0);
    for (double g : rec.gradient_norms) CHECK(g == 0.0);
  }
}

TEST_CASE("supplied draws replace the streams") {
  const auto ec = LoadConfig(DMARL_SOURCE_DIR "/configs/example1.cfg");
  const GraphArtifacts art(ec.graph());
  const WarehouseEnvironment env(ec.env, ec.policy, ec.horizon, ec.discount);
  const PolicyParams theta0 = env.policy().ZeroParams();
  LearnerConfig c = Cfg(OracleFlavor::kOnePoint, OracleScope::kDistributed, 0.3, 0.005, 1);
  c.record_noise = true;
  Learner l(art, env, c);
  Rng p(1), e(2);
  ResidualState rs;
  const auto first = l.RunEpisode(theta0, 0, p, e, rs).second;
  Rng p2(99), e2(98);
  const Rng p2_copy = p2, e2_copy = e2;
  EpisodeDraws d{first.perturbation, first.noise};
  const auto again = l.RunEpisode(theta0, 0, p2, e2, rs, d).second;
  CHECK(again.observed_values == first.observed_values);
  CHECK(p2 == p2_copy);
  CHECK(e2 == e2_copy);
}

TEST_CASE("local values on a chain") {
  // agent 1 reaches everyone, so its local value is the global one
  Rng rng(17);
  const auto g = CoordinationGraph::FromOneBased(3, {{1, 2}, {2, 3}});
  const auto obj = validation::MakeSynthetic(g, rng);
  const validation::SyntheticEnvironment env(obj);
  const GraphArtifacts art(g);
  Learner dist(art, env, Cfg(OracleFlavor::kTwoPoint, OracleScope::kDistributed, 0.2, 0.0, 1));
  Learner cent(art, env, Cfg(OracleFlavor::kTwoPoint, OracleScope::kCentralized, 0.2, 0.0, 1));
  const PolicyParams theta(obj.block_dims());
  for (int t = 0; t < 20; ++t) {
    Rng p(t), e(t + 100), p2(t), e2(t + 100);
    ResidualState a, b;
    const auto rd = dist.RunEpisode(theta, 0, p, e, a).second;
    const auto rc = cent.RunEpisode(theta, 0, p2, e2, b).second;
    CHECK(rd.gradient_norms[0] == doctest::Approx(rc.gradient_norms[0]).epsilon(1e-12));
    // agent 3 only needs its own term
    const PolicyParams moved = Perturb(theta, 0.2, rd.perturbation);
    const double dj = obj.Term(2, moved.flat()) - obj.Term(2, theta.flat());
    double u3 = 0.0;
    for (std::size_t k = 0; k < theta.dim(2); ++k)
      u3 += rd.perturbation[theta.offset(2) + k] * rd.perturbation[theta.offset(2) + k];
    CHECK(rd.gradient_norms[2] == doctest::Approx(std::abs(dj) / 0.2 * std::sqrt(u3)).epsilon(1e-12));
  }
}

TEST_CASE("two-point ascent on a strongly concave synthetic objective") {
  Rng rng(2024);
  const auto g = CoordinationGraph::FromOneBased(4, {{1, 2}, {2, 3}, {1, 4}});
  const auto obj = validation::MakeSynthetic(g, rng);
  const validation::SyntheticEnvironment env(obj);
  const GraphArtifacts art(g);

  PolicyParams theta0(obj.block_dims());
  std::normal_distribution<double> n01;
  for (double& v : theta0.flat()) v = n01(rng);
  const double g0 = Norm(obj.GlobalGradient(theta0.flat()));

  // exact gradient ascent with the same step reaches the optimum
  const double eta = 0.01;
  std::vector<double> x(theta0.flat().begin(), theta0.flat().end());
  for (int k = 0; k < 2000; ++k) {
    const auto grad = obj.GlobalGradient(x);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += eta * grad[i];
  }
  REQUIRE(Norm(obj.GlobalGradient(x)) < 1e-2 * g0);

  for (auto scope : {OracleScope::kDistributed, OracleScope::kCentralized}) {
    Learner l(art, env, Cfg(OracleFlavor::kTwoPoint, scope, 0.05, eta, 2000));
    Rng p(1), e(2);
    const auto r = l.Train(theta0, p, e);
    CHECK(Norm(obj.GlobalGradient(r.final_params.flat())) < 0.1 * g0);
  }
}

TEST_CASE("schedule") {
  auto s = ConvergenceSchedule(1.0, 1.0, 1, 1);
  CHECK(s.delta == 1.0);
  CHECK(s.step_size == 1.0);
  CHECK_FALSE(s.required_epochs);
  CHECK(ConvergenceSchedule(0.1, 2.0, 4, 10).delta == doctest::Approx(0.025).epsilon(1e-15));
  const double eta4 = ConvergenceSchedule(0.1, 2.0, 4, 10).step_size;
  const double eta8 = ConvergenceSchedule(0.1, 2.0, 8, 10).step_size;
  CHECK(eta8 / eta4 == doctest::Approx(std::pow(2.0, -1.5)).epsilon(1e-14));
  CHECK(*ConvergenceSchedule(1.0, 1.0, 2, 1, 1.0).required_epochs == 8.0);
  CHECK_THROWS_AS(ConvergenceSchedule(0.0, 1.0, 1, 1), LearnerError);
  CHECK(ScheduleConstant(2.0, 1.0, 1.0, 1.0, 1.0) == 2.0);
}
