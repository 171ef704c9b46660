#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmarl/policy.hpp"
#include "dmarl/random.hpp"

namespace dmarl {

class OracleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class OracleFlavor { kOnePoint, kTwoPoint, kResidual };

/// Distributed agents use their local value W^_i; centralized agents all use
/// the global value sum_i W_i.
enum class OracleScope { kDistributed, kCentralized };

std::string ToString(OracleFlavor f);
std::string ToString(OracleScope s);
OracleFlavor ParseOracleFlavor(const std::string& s);
OracleScope ParseOracleScope(const std::string& s);

struct OracleConfig {
  double delta = 0.1;
  OracleFlavor flavor = OracleFlavor::kOnePoint;
  OracleScope scope = OracleScope::kDistributed;

  void Validate() const;
};

struct GradientEstimate {
  PolicyParams blocks;                  // g_i, same layout as theta
  std::vector<double> perturbation;     // u^k
  std::vector<double> values_used;      // per agent, value at theta + delta u
  std::vector<double> baseline_values;  // per agent; empty for one-point

  std::vector<double> BlockNorms() const;
  double SquaredNorm() const;
};

/// Value subtracted by the residual oracle: the previous episode's perturbed
/// values. Before the first episode the baseline is zero, which makes
/// episode 0 a one-point step.
struct ResidualState {
  std::vector<double> previous;
  bool initialized = false;
};

/// i.i.d. N(0,1) entries, drawn in flat order (block 1 first).
std::vector<double> SamplePerturbation(std::span<const std::size_t> dims, Rng& rng);

/// g_i = (W^_i(theta + delta u) / delta) u_i.
GradientEstimate OnePoint(std::span<const double> values, std::span<const double> u,
                          std::span<const std::size_t> dims, double delta);

/// g_i = ((W^_i(theta + delta u, xi) - W^_i(theta, xi)) / delta) u_i.
/// Both values must come from the same noise realization; the tags are
/// fingerprints of the realizations and must match.
GradientEstimate TwoPoint(std::span<const double> values_perturbed,
                          std::span<const double> values_base, std::span<const double> u,
                          std::span<const std::size_t> dims, double delta,
                          std::uint64_t noise_tag_perturbed, std::uint64_t noise_tag_base);

/// g_i = ((W^_i(theta^k + delta u^k, xi^k) - previous_i) / delta) u^k_i, then
/// stores the current values as the next baseline.
GradientEstimate Residual(std::span<const double> values_now, ResidualState& state,
                          std::span<const double> u, std::span<const std::size_t> dims,
                          double delta);

/// W = sum_i W_i. Throws when the vector does not cover every agent.
double CentralizedValue(std::span<const double> values, std::size_t num_agents);

/// (J^*_i^2 + sigma^_i^2) d_i / delta^2
double OnePointSecondMomentBound(double j_hat_star, double sigma_hat, std::size_t block_dim,
                                 double delta);

/// (L^_i^2 + sigma^_i^2)(d_i d + 8 d_i + 16)
double TwoPointSecondMomentBound(double l_hat, double sigma_hat, std::size_t block_dim,
                                 std::size_t total_dim);

/// Aggregate form over the whole vector: (L_0^2 + sigma_0^2)(d + 4)^2.
double TwoPointAggregateBound(double l0, double sigma0, std::size_t total_dim);

}  // namespace dmarl
