#include "dmarl/oracle.hpp"

#include <cmath>
#include <numeric>

namespace dmarl {

std::string ToString(OracleFlavor f) {
  switch (f) {
    case OracleFlavor::kOnePoint: return "one_point";
    case OracleFlavor::kTwoPoint: return "two_point";
    case OracleFlavor::kResidual: return "residual";
  }
  return "?";
}

std::string ToString(OracleScope s) {
  return s == OracleScope::kCentralized ? "centralized" : "distributed";
}

OracleFlavor ParseOracleFlavor(const std::string& s) {
  if (s == "one_point") return OracleFlavor::kOnePoint;
  if (s == "two_point") return OracleFlavor::kTwoPoint;
  if (s == "residual") return OracleFlavor::kResidual;
  throw OracleError("unknown oracle flavor '" + s + "'");
}

OracleScope ParseOracleScope(const std::string& s) {
  if (s == "distributed") return OracleScope::kDistributed;
  if (s == "centralized") return OracleScope::kCentralized;
  throw OracleError("unknown oracle scope '" + s + "'");
}

void OracleConfig::Validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw OracleError("smoothing radius delta must be positive and finite");
}

std::vector<double> GradientEstimate::BlockNorms() const {
  std::vector<double> norms(blocks.num_blocks());
  for (std::size_t i = 0; i < norms.size(); ++i) {
    double sq = 0.0;
    for (double g : blocks.block(i)) sq += g * g;
    norms[i] = std::sqrt(sq);
  }
  return norms;
}

double GradientEstimate::SquaredNorm() const {
  double sq = 0.0;
  for (double g : blocks.flat()) sq += g * g;
  return sq;
}

std::vector<double> SamplePerturbation(std::span<const std::size_t> dims, Rng& rng) {
  const std::size_t total = std::accumulate(dims.begin(), dims.end(), std::size_t{0});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(total);
  for (double& v : u) v = normal(rng);
  return u;
}

namespace {

void CheckDelta(double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw OracleError("smoothing radius delta must be positive and finite");
}

// g_i = (coef_i / delta) * u_i for every block.
GradientEstimate Scaled(std::span<const double> coef, std::span<const double> u,
                        std::span<const std::size_t> dims, double delta) {
  if (coef.size() != dims.size())
    throw OracleError("got " + std::to_string(coef.size()) + " agent values for " +
                      std::to_string(dims.size()) + " parameter blocks");
  GradientEstimate est;
  est.blocks = PolicyParams(std::vector<std::size_t>(dims.begin(), dims.end()));
  if (u.size() != est.blocks.total_dim())
    throw OracleError("perturbation has dimension " + std::to_string(u.size()) +
                      ", expected " + std::to_string(est.blocks.total_dim()));
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const double scale = coef[i] / delta;
    auto g = est.blocks.block(i);
    const std::size_t off = est.blocks.offset(i);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = scale * u[off + k];
  }
  est.perturbation.assign(u.begin(), u.end());
  return est;
}

}  // namespace

GradientEstimate OnePoint(std::span<const double> values, std::span<const double> u,
                          std::span<const std::size_t> dims, double delta) {
  CheckDelta(delta);
  GradientEstimate est = Scaled(values, u, dims, delta);
  est.values_used.assign(values.begin(), values.end());
  return est;
}

GradientEstimate TwoPoint(std::span<const double> values_perturbed,
                          std::span<const double> values_base, std::span<const double> u,
                          std::span<const std::size_t> dims, double delta,
                          std::uint64_t noise_tag_perturbed, std::uint64_t noise_tag_base) {
  CheckDelta(delta);
  if (noise_tag_perturbed != noise_tag_base)
    throw OracleError("two-point evaluations used different noise realizations");
  if (values_perturbed.size() != values_base.size())
    throw OracleError("perturbed and base value vectors differ in length");
  std::vector<double> diff(values_perturbed.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = values_perturbed[i] - values_base[i];
  GradientEstimate est = Scaled(diff, u, dims, delta);
  est.values_used.assign(values_perturbed.begin(), values_perturbed.end());
  est.baseline_values.assign(values_base.begin(), values_base.end());
  return est;
}

GradientEstimate Residual(std::span<const double> values_now, ResidualState& state,
                          std::span<const double> u, std::span<const std::size_t> dims,
                          double delta) {
  CheckDelta(delta);
  if (!state.initialized) state.previous.assign(values_now.size(), 0.0);
  if (state.previous.size() != values_now.size())
    throw OracleError("residual state tracks a different number of agents");
  std::vector<double> diff(values_now.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = values_now[i] - state.previous[i];
  GradientEstimate est = Scaled(diff, u, dims, delta);
  est.values_used.assign(values_now.begin(), values_now.end());
  est.baseline_values = state.previous;
  state.previous.assign(values_now.begin(), values_now.end());
  state.initialized = true;
  return est;
}

double CentralizedValue(std::span<const double> values, std::size_t num_agents) {
  if (values.size() != num_agents)
    throw OracleError("global value needs all " + std::to_string(num_agents) +
                      " agent values, got " + std::to_string(values.size()));
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

double OnePointSecondMomentBound(double j_hat_star, double sigma_hat, std::size_t block_dim,
                                 double delta) {
  CheckDelta(delta);
  if (j_hat_star < 0.0 || sigma_hat < 0.0) throw OracleError("bound inputs must be non-negative");
  return (j_hat_star * j_hat_star + sigma_hat * sigma_hat) * static_cast<double>(block_dim) /
         (delta * delta);
}

double TwoPointSecondMomentBound(double l_hat, double sigma_hat, std::size_t block_dim,
                                 std::size_t total_dim) {
  if (l_hat < 0.0 || sigma_hat < 0.0) throw OracleError("bound inputs must be non-negative");
  const double di = static_cast<double>(block_dim), d = static_cast<double>(total_dim);
  return (l_hat * l_hat + sigma_hat * sigma_hat) * (di * d + 8.0 * di + 16.0);
}

double TwoPointAggregateBound(double l0, double sigma0, std::size_t total_dim) {
  if (l0 < 0.0 || sigma0 < 0.0) throw OracleError("bound inputs must be non-negative");
  const double d4 = static_cast<double>(total_dim) + 4.0;
  return (l0 * l0 + sigma0 * sigma0) * d4 * d4;
}

}  // namespace dmarl
