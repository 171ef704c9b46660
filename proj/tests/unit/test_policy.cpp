#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "dmarl/policy.hpp"

using namespace dmarl;

namespace {

CoordinationGraph Pair() { return CoordinationGraph::FromOneBased(2, {{1, 2}}); }

}  // namespace

TEST_CASE("centers") {
  const Range two[3] = {{0, 2}, {0, 2}, {0, 2}};
  CHECK(MakeCenters(two, 1) == std::vector<std::vector<double>>{{1.0, 1.0, 1.0}});

  const Range unit[1] = {{0, 1}};
  const auto c2 = MakeCenters(unit, 2);
  CHECK(c2[0][0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(c2[1][0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  const Range box[2] = {{-1, 2}, {0, 0.5}};
  const auto c4 = MakeCenters(box, 4);
  REQUIRE(c4.size() == 4);
  for (std::size_t a = 0; a < 4; ++a) {
    // on the diagonal: equal fraction along both axes
    CHECK((c4[a][0] + 1.0) / 3.0 == doctest::Approx(c4[a][1] / 0.5));
    for (std::size_t b = a + 1; b < 4; ++b) CHECK(c4[a] != c4[b]);
  }

  const Range bad[1] = {{1, 1}};
  CHECK_THROWS_AS(MakeCenters(bad, 2), PolicyError);
  CHECK_THROWS_AS(MakeCenters(two, 0), PolicyError);
}

TEST_CASE("scores") {
  RbfPolicy::Options o;
  o.num_centers = 1;
  o.stock_range = {0, 2};
  o.demand_range = {0, 2};
  const RbfPolicy pol(Pair(), o);
  CHECK(pol.obs_dim(0) == 2);
  CHECK(pol.num_slots(0) == 2);
  CHECK(pol.BlockDims() == std::vector<std::size_t>{2, 1});

  const std::vector<double> zero_block{0.0, 0.0};
  const std::vector<double> obs{0.3, 0.7};
  CHECK(pol.Scores(0, zero_block, obs) == std::vector<double>{0.0, 0.0});

  const std::vector<double> block{0.5, 0.5};
  const std::vector<double> at_center{1.0, 1.0};
  CHECK(pol.Scores(0, block, at_center) == std::vector<double>{0.0, 0.0});

  const std::vector<double> far{0.0, 0.0};  // distance sqrt(2)
  const auto z = pol.Scores(0, block, far);
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 1.0);

  const std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(pol.Scores(0, block, wrong), PolicyError);
}

TEST_CASE("gaussian features") {
  RbfPolicy::Options o;
  o.num_centers = 1;
  o.stock_range = {0, 2};
  o.demand_range = {0, 2};
  o.feature = FeatureKind::kGaussian;
  const RbfPolicy pol(Pair(), o);
  const std::vector<double> obs{0.0, 0.0};
  CHECK(pol.Features(0, obs)[0] == doctest::Approx(std::exp(-2.0)));
  CHECK(ParseFeatureKind(ToString(FeatureKind::kGaussian)) == FeatureKind::kGaussian);
}

TEST_CASE("softmax") {
  const std::vector<double> same{0.4, 0.4, 0.4, 0.4};
  for (double a : SoftmaxAllocation(same)) CHECK(a == doctest::Approx(0.25));

  const std::vector<double> z{std::log(3.0), 0.0};  // (j, self)
  const auto a = SoftmaxAllocation(z);
  CHECK(a[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.75).epsilon(1e-15));

  Rng rng(4);
  std::normal_distribution<double> big(0.0, 300.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(1 + t % 7);
    for (double& v : s) v = big(rng);
    const auto p = SoftmaxAllocation(s);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
    std::vector<double> shifted = s;
    for (double& v : shifted) v += 12.5;
    const auto q = SoftmaxAllocation(shifted);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(q[k] == doctest::Approx(p[k]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(SoftmaxAllocation(std::vector<double>{}), PolicyError);
  CHECK_THROWS_AS(SoftmaxAllocation(std::vector<double>{NAN}), PolicyError);
}

TEST_CASE("act") {
  const auto g = CoordinationGraph::FromOneBased(3, {{1, 2}, {1, 3}, {2, 3}});
  const RbfPolicy pol(g, {});
  PolicyParams theta = pol.ZeroParams();
  const std::vector<double> o1(pol.obs_dim(0), 0.2), o3(pol.obs_dim(2), 0.2);
  const auto a1 = pol.Act(theta, 0, o1);
  REQUIRE(a1.size() == 2);
  CHECK(a1[0] == doctest::Approx(1.0 / 3.0));
  CHECK(a1[1] == doctest::Approx(1.0 / 3.0));
  CHECK(pol.Act(theta, 2, o3).empty());

  // moving agent 1's block leaves the other agents' actions alone
  const std::vector<double> o2(pol.obs_dim(1), 0.2);
  const auto before = pol.Act(theta, 1, o2);
  std::vector<double> u(theta.total_dim(), 0.0);
  for (std::size_t k = 0; k < theta.dim(0); ++k) u[theta.offset(0) + k] = 1.0 + k;
  const auto moved = Perturb(theta, 0.3, u);
  CHECK(pol.Act(moved, 1, o2) == before);
  CHECK(pol.Act(moved, 0, o1) != a1);
}

TEST_CASE("perturb") {
  PolicyParams p({2, 3}, {0.5, -1.25, 2.0, 0.75, -0.125});
  const std::vector<double> u{1.0, 0.5, -0.25, 2.0, 0.0};
  CHECK(Perturb(p, 0.0, u) == p);

  std::vector<double> e(5, 0.0);
  e[3] = 1.0;
  const auto q = Perturb(p, 0.5, e);
  CHECK(q.block(0)[0] == p.block(0)[0]);
  CHECK(q.block(0)[1] == p.block(0)[1]);
  CHECK(q.block(1)[1] == 1.25);

  // dyadic inputs: exact round trip
  CHECK(Perturb(Perturb(p, 0.25, u), -0.25, u) == p);

  Rng rng(8);
  std::normal_distribution<double> n01;
  std::vector<double> v(5);
  for (double& x : v) x = n01(rng);
  PolicyParams r({2, 3}, v);
  const auto back = Perturb(Perturb(r, 0.1, u), -0.1, u);
  for (std::size_t k = 0; k < 5; ++k)
    CHECK(back.flat()[k] == doctest::Approx(r.flat()[k]).epsilon(1e-15).scale(1.0));

  CHECK_THROWS(Perturb(p, 1.0, std::vector<double>(4, 0.0)));
}

TEST_CASE("checkpoints round-trip") {
  Rng rng(2);
  std::normal_distribution<double> n01;
  std::vector<double> v(9);
  for (double& x : v) x = n01(rng);
  const PolicyParams p({4, 0, 5}, v);

  std::stringstream bin;
  WriteCheckpointBinary(bin, p);
  CHECK(ReadCheckpointBinary(bin) == p);
  CHECK(CheckpointFromJson(CheckpointToJson(p)) == p);

  std::stringstream junk("NOTACKPT........");
  CHECK_THROWS_AS(ReadCheckpointBinary(junk), PolicyError);
  CHECK_FALSE(PolicyParams({1}, {NAN}).AllFinite());
}
