#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dmarl/oracle.hpp"

using namespace dmarl;

namespace {

struct Stats {
  std::vector<double> sum, sq;
  std::size_t n = 0;
  explicit Stats(std::size_t d) : sum(d), sq(d) {}
  void Add(std::span<const double> g) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      sum[k] += g[k];
      sq[k] += g[k] * g[k];
    }
    ++n;
  }
  double Mean(std::size_t k) const { return sum[k] / n; }
  double Se(std::size_t k) const {
    const double m = Mean(k);
    return std::sqrt((sq[k] / n - m * m) / (n - 1));
  }
};

}  // namespace

TEST_CASE("perturbation sampling") {
  const std::vector<std::size_t> dims{2, 3};
  Rng a(1), b(1);
  CHECK(SamplePerturbation(dims, a) == SamplePerturbation(dims, b));

  const std::size_t m = 100000;
  Stats s(5);
  for (std::size_t t = 0; t < m; ++t) s.Add(SamplePerturbation(dims, a));
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(std::abs(s.Mean(k)) <= 3.0 / std::sqrt(double(m)));
    const double var = s.sq[k] / m - s.Mean(k) * s.Mean(k);
    CHECK(std::abs(var - 1.0) <= 0.05);
  }
}

TEST_CASE("one-point") {
  const std::vector<std::size_t> dims{2, 1};
  const std::vector<double> u{0.5, -1.0, 2.0};
  const auto zero = OnePoint(std::vector<double>{0.0, 0.0}, u, dims, 0.7);
  CHECK(zero.SquaredNorm() == 0.0);

  const auto g = OnePoint(std::vector<double>{3.0, -2.0}, u, dims, 1.0);
  CHECK(g.blocks.flat()[0] == 1.5);
  CHECK(g.blocks.flat()[1] == -3.0);
  CHECK(g.blocks.flat()[2] == -4.0);
  CHECK(g.baseline_values.empty());
  CHECK(g.BlockNorms()[1] == 4.0);

  CHECK_THROWS_AS(OnePoint(std::vector<double>{1.0}, u, dims, 1.0), OracleError);
  CHECK_THROWS_AS(OnePoint(std::vector<double>{1.0, 1.0}, u, dims, 0.0), OracleError);
}

TEST_CASE("one-point is unbiased for a quadratic") {
  // J = ||theta||^2, one agent holding all of theta: the smoothed gradient is 2 theta.
  const std::vector<double> theta{0.5, -0.25, 0.125};
  const std::vector<std::size_t> dims{3};
  const double delta = 0.5;
  Rng rng(12);
  Stats s(3);
  for (int t = 0; t < 1000000; ++t) {
    const auto u = SamplePerturbation(dims, rng);
    double j = 0.0;
    for (int k = 0; k < 3; ++k) j += (theta[k] + delta * u[k]) * (theta[k] + delta * u[k]);
    s.Add(OnePoint(std::vector<double>{j}, u, dims, delta).blocks.flat());
  }
  for (int k = 0; k < 3; ++k) CHECK(std::abs(s.Mean(k) - 2.0 * theta[k]) <= 3.0 * s.Se(k));
}

TEST_CASE("two-point") {
  const std::vector<std::size_t> dims{1, 2};
  const std::vector<double> u{1.0, -0.5, 0.25};
  const std::vector<double> c{4.0, 4.0};
  CHECK(TwoPoint(c, c, u, dims, 0.1, 7, 7).SquaredNorm() == 0.0);
  CHECK_THROWS_AS(TwoPoint(c, c, u, dims, 0.1, 7, 8), OracleError);
  CHECK_THROWS_AS(TwoPoint(c, std::vector<double>{4.0}, u, dims, 0.1, 7, 7), OracleError);

  // linear J = <c, theta>: value difference is delta <c, u> for every noise draw
  const std::vector<double> cvec{1.0, 2.0, -3.0};
  const std::vector<double> theta{0.3, 0.1, -0.2};
  const double delta = 0.2;
  Rng rng(5);
  Stats s(3);
  for (int t = 0; t < 200000; ++t) {
    const auto v = SamplePerturbation(dims, rng);
    double base = 0.0, pert = 0.0;
    for (int k = 0; k < 3; ++k) {
      base += cvec[k] * theta[k];
      pert += cvec[k] * (theta[k] + delta * v[k]);
    }
    const double xi = std::normal_distribution<double>(0.0, 1.0)(rng);
    const auto g = TwoPoint(std::vector<double>{pert + xi, pert + xi},
                            std::vector<double>{base + xi, base + xi}, v, dims, delta, 1, 1);
    s.Add(g.blocks.flat());
  }
  for (int k = 0; k < 3; ++k) CHECK(std::abs(s.Mean(k) - cvec[k]) <= 3.0 * s.Se(k));
}

TEST_CASE("residual") {
  const std::vector<std::size_t> dims{2};
  const std::vector<double> u{0.5, -2.0};
  const std::vector<double> w{1.5};
  ResidualState st;
  const auto first = Residual(w, st, u, dims, 0.5);
  CHECK(first.blocks == OnePoint(w, u, dims, 0.5).blocks);
  CHECK(st.initialized);
  CHECK(st.previous == w);
  for (int k = 0; k < 3; ++k) CHECK(Residual(w, st, u, dims, 0.5).SquaredNorm() == 0.0);

  ResidualState other{{1.0, 2.0}, true};
  CHECK_THROWS_AS(Residual(w, other, u, dims, 0.5), OracleError);
}

TEST_CASE("residual is unbiased at a fixed theta") {
  const std::vector<double> theta{0.5, -0.5};
  const std::vector<std::size_t> dims{2};
  const double delta = 0.5;
  Rng rng(31);
  ResidualState st;
  Stats s(2);
  for (int t = 0; t < 400000; ++t) {
    const auto u = SamplePerturbation(dims, rng);
    double j = 0.0;
    for (int k = 0; k < 2; ++k) j += (theta[k] + delta * u[k]) * (theta[k] + delta * u[k]);
    s.Add(Residual(std::vector<double>{j}, st, u, dims, delta).blocks.flat());
  }
  // draws are 1-dependent through the baseline: Var(mean) <= 3 * iid value
  for (int k = 0; k < 2; ++k) CHECK(std::abs(s.Mean(k) - 2.0 * theta[k]) <= 3.0 * std::sqrt(3.0) * s.Se(k));
}

TEST_CASE("centralized value") {
  CHECK(CentralizedValue(std::vector<double>{0.0, 0.0}, 2) == 0.0);
  CHECK(CentralizedValue(std::vector<double>{1.0, 2.0, 3.0}, 3) == 6.0);
  CHECK_THROWS_AS(CentralizedValue(std::vector<double>{1.0, 2.0}, 3), OracleError);
}

TEST_CASE("bounds") {
  CHECK(OnePointSecondMomentBound(1.0, 0.0, 4, 1.0) == 4.0);
  CHECK(OnePointSecondMomentBound(0.0, 0.0, 4, 1.0) == 0.0);
  CHECK(OnePointSecondMomentBound(1.5, 0.5, 3, 0.25) == 4.0 * OnePointSecondMomentBound(1.5, 0.5, 3, 0.5));
  CHECK(TwoPointSecondMomentBound(1.0, 0.0, 1, 1) == 25.0);
  CHECK(TwoPointAggregateBound(1.0, 0.0, 1) == 25.0);
  CHECK(TwoPointSecondMomentBound(0.0, 0.0, 3, 7) == 0.0);
  CHECK(TwoPointSecondMomentBound(1.0, 1.0, 2, 10) == 104.0);
  CHECK_THROWS_AS(OnePointSecondMomentBound(-1.0, 0.0, 1, 1.0), OracleError);
}

TEST_CASE("names") {
  for (auto f : {OracleFlavor::kOnePoint, OracleFlavor::kTwoPoint, OracleFlavor::kResidual})
    CHECK(ParseOracleFlavor(ToString(f)) == f);
  for (auto s : {OracleScope::kDistributed, OracleScope::kCentralized})
    CHECK(ParseOracleScope(ToString(s)) == s);
  CHECK_THROWS_AS(ParseOracleFlavor("three_point"), OracleError);
  OracleConfig bad;
  bad.delta = -1.0;
  CHECK_THROWS_AS(bad.Validate(), OracleError);
}
