#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmarl/graph.hpp"
#include "dmarl/learner.hpp"
#include "dmarl/oracle.hpp"
#include "dmarl/random.hpp"

namespace dmarl::validation {

using ScalarField = std::function<double(std::span<const double>)>;
using VectorField = std::function<std::vector<double>(std::span<const double>)>;

/// Sample statistics of a vector-valued Monte-Carlo estimator. Standard errors
/// come from the sample variance.
struct MomentEstimate {
  std::size_t samples = 0;
  std::vector<double> mean;
  std::vector<double> std_error;
  double second_moment = 0.0;     // mean of ||sample||^2
  double second_moment_se = 0.0;
};

/// Streaming mean/variance (Welford) for vectors plus the squared norm.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t dim);
  void Add(std::span<const double> sample);
  MomentEstimate Result() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_, m2_;
  double sq_mean_ = 0.0, sq_m2_ = 0.0;
};

/// Mean of (f(theta + delta u) / delta) u over M draws, u ~ N(0, I).
MomentEstimate McSmoothedGradient(const ScalarField& f, std::span<const double> theta,
                                  double delta, std::size_t samples, Rng& rng);

/// Several objectives sharing the same draws; returns one estimate per output
/// of f. Output k of f contributes (f_k(theta + delta u) / delta) u.
std::vector<MomentEstimate> McSmoothedGradients(const VectorField& f,
                                                std::span<const double> theta, double delta,
                                                std::size_t samples, Rng& rng);

/// Central differences, one coordinate at a time.
std::vector<double> FiniteDifferenceGradient(const ScalarField& f, std::span<const double> theta,
                                             double h);

enum class SyntheticFamily {
  kQuadratic,  // J_i = offset - (x - c)^T Q (x - c), Q positive definite, offset <= 0
  kCosine,     // J_i = amplitude * cos(<v, x - c> + phase); bounded and Lipschitz
  kAbsolute,   // J_i = -scale * ||x - c||_1; Lipschitz, not differentiable
};

std::string ToString(SyntheticFamily f);

struct SyntheticTerm {
  std::vector<AgentId> deps;        // blocks J_i reads, ascending
  std::vector<std::size_t> index;   // flat theta indices of those blocks
  std::vector<double> center;
  std::vector<double> matrix;       // quadratic: row-major symmetric Q
  std::vector<double> direction;    // cosine: v
  double scale = 1.0;
  double offset = 0.0;
  double phase = 0.0;
};

/// Decomposable objective J = sum_i J_i aligned with a coordination graph:
/// J_i reads exactly the blocks of N_i^{L-} and i. Observations add
/// independent N(0, sigma_i^2) noise per agent.
class SyntheticObjective {
 public:
  SyntheticObjective(GraphArtifacts graph, SyntheticFamily family,
                     std::vector<std::size_t> block_dims, std::vector<SyntheticTerm> terms,
                     std::vector<double> noise_std);

  const GraphArtifacts& graph() const { return graph_; }
  SyntheticFamily family() const { return family_; }
  int num_agents() const { return graph_.graph.num_agents(); }
  const std::vector<std::size_t>& block_dims() const { return dims_; }
  std::size_t total_dim() const { return total_; }
  std::size_t block_offset(AgentId i) const { return offsets_[i]; }
  const SyntheticTerm& term(AgentId i) const { return terms_[i]; }
  const std::vector<double>& noise_std() const { return noise_std_; }

  double Term(AgentId i, std::span<const double> theta) const;
  std::vector<double> Terms(std::span<const double> theta) const;
  double Global(std::span<const double> theta) const;
  double Local(AgentId i, std::span<const double> theta) const;

  /// Full-length gradient of one term; zero outside its dependency blocks.
  std::vector<double> TermGradient(AgentId i, std::span<const double> theta) const;
  /// sum_j grad J_j, accumulated in ascending j.
  std::vector<double> GlobalGradient(std::span<const double> theta) const;
  /// sum_{j in I_i^L} grad J_j, accumulated in ascending j.
  std::vector<double> LocalGradient(AgentId i, std::span<const double> theta) const;

  /// Known constants. Bound() is only finite for the cosine family.
  double Bound(AgentId i) const;       // J_i^*
  double Lipschitz(AgentId i) const;   // L_i (infinite for quadratics)
  double LocalBound(AgentId i) const;  // J^_i^* = sum_{I_i^L} J_j^*
  double LocalLipschitz(AgentId i) const;
  double LocalSigma(AgentId i) const;  // sqrt(sum_{I_i^L} sigma_j^2)
  double GlobalBound() const;          // J^*
  double GlobalSigma() const;          // sqrt(sum sigma_j^2)

  /// Per-agent observed values W_i = J_i(theta) + xi_i.
  std::vector<double> Observe(std::span<const double> theta, std::span<const double> xi) const;
  std::vector<double> DrawNoise(Rng& rng) const;

 private:
  GraphArtifacts graph_;
  SyntheticFamily family_;
  std::vector<std::size_t> dims_, offsets_;
  std::size_t total_ = 0;
  std::vector<SyntheticTerm> terms_;
  std::vector<double> noise_std_;
};

struct SyntheticOptions {
  SyntheticFamily family = SyntheticFamily::kQuadratic;
  std::size_t min_block_dim = 1;
  std::size_t max_block_dim = 2;
  double noise_std = 0.0;
};

SyntheticObjective MakeSynthetic(const CoordinationGraph& graph, Rng& rng,
                                 const SyntheticOptions& opts = {});

/// Structural inspection: declared dependencies equal N_i^{L-} plus i, and
/// moving any block outside them leaves J_i bit-identical.
bool CheckDependencyStructure(const SyntheticObjective& obj, Rng& rng, std::string* why = nullptr);

/// Random digraph on n vertices with edge probability p; when
/// weakly_connected is set, a random spanning tree is added first.
CoordinationGraph RandomGraph(int n, double p, Rng& rng, bool weakly_connected = true);

/// Presents a synthetic objective to the learner. The noise trace carries
/// xi in its first demand-noise row.
class SyntheticEnvironment final : public ValueEnvironment {
 public:
  explicit SyntheticEnvironment(const SyntheticObjective& obj) : obj_(obj) {}
  int num_agents() const override { return obj_.num_agents(); }
  std::vector<std::size_t> BlockDims() const override { return obj_.block_dims(); }
  NoiseTrace DrawNoise(Rng& rng) const override;
  std::vector<double> Returns(const PolicyParams& theta, const NoiseTrace& xi) const override;

 private:
  const SyntheticObjective& obj_;
};

struct SmoothingGapReport {
  double worst_gap = 0.0;
  double worst_gap_se = 0.0;
  double bound = 0.0;  // delta * sqrt(d) * L
  std::vector<double> gaps;
  std::vector<double> std_errors;
};

/// Monte-Carlo estimate of |f^delta(theta) - f(theta)| at each theta.
SmoothingGapReport CheckSmoothingGap(const ScalarField& f, double lipschitz, double delta,
                                     const std::vector<std::vector<double>>& thetas,
                                     std::size_t samples, Rng& rng);

/// One oracle draw at a fixed theta.
using OracleSampler = std::function<GradientEstimate(Rng&)>;

struct SecondMomentEstimate {
  std::size_t samples = 0;
  std::vector<double> block_mean;  // E||g_i||^2
  std::vector<double> block_se;
  double total_mean = 0.0;         // E||g||^2
  double total_se = 0.0;
};

SecondMomentEstimate EmpiricalSecondMoment(const OracleSampler& sampler, std::size_t samples,
                                           Rng& rng);

/// Oracle draws on a synthetic objective at fixed theta. Residual samplers
/// keep their baseline between calls, so consecutive draws form a chain.
OracleSampler MakeSyntheticSampler(const SyntheticObjective& obj, std::vector<double> theta,
                                   OracleConfig cfg);

/// Mean-of-oracle estimate (per coordinate) from M sampler draws.
MomentEstimate OracleMean(const OracleSampler& sampler, std::size_t samples, Rng& rng);

/// Upper-tail standard normal quantile: returns z with P(Z > z) = p.
double NormalUpperQuantile(double p);

/// Family-wise two-sided threshold at the 3-sigma level for m comparisons
/// (Sidak correction of alpha = 2 * P(Z > 3)).
double FamilyWiseThreeSigma(std::size_t comparisons);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  double seconds = 0.0;

  bool passed() const;
  std::string ToText() const;
  std::string ToJson() const;
};

struct SuiteOptions {
  std::uint64_t seed = 20220501;
  double scale = 1.0;  // multiplies sample counts and instance counts (>= 0.01)
};

/// Lemma-1 checks: exact analytic block-gradient equality, finite-difference
/// agreement, and smoothed-gradient block agreement (quadratic and l1 families).
SuiteReport Lemma1Suite(const SuiteOptions& opts = {});
/// Oracle unbiasedness for one-point, two-point and residual estimators.
SuiteReport UnbiasednessSuite(const SuiteOptions& opts = {});
/// Empirical second moments against the one-point and two-point bounds, and
/// the distributed-vs-centralized comparison.
SuiteReport BoundsSuite(const SuiteOptions& opts = {});
/// Per-block second moment ordering, distributed below centralized.
SuiteReport ScopeVarianceSuite(const SuiteOptions& opts = {});
/// Gap between a Lipschitz function and its Gaussian smoothing.
SuiteReport SmoothingGapSuite(const SuiteOptions& opts = {});
/// Learning-graph soundness against brute-force transitive closure.
SuiteReport GraphSuite(const SuiteOptions& opts = {});

std::vector<std::string> SuiteNames();
SuiteReport RunSuite(const std::string& name, const SuiteOptions& opts = {});

/// Brute-force reachability matrix (Floyd-Warshall style transitive closure).
std::vector<std::vector<bool>> TransitiveClosure(const CoordinationGraph& g);

}  // namespace dmarl::validation
