#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dmarl/graph.hpp"
#include "dmarl/warehouse.hpp"

namespace dmarl {

class PolicyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat parameter vector theta = (theta_1, ..., theta_N) with per-agent block
/// offsets. Block i is the slice [offset(i), offset(i) + dim(i)).
class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(std::vector<std::size_t> block_dims);
  PolicyParams(std::vector<std::size_t> block_dims, std::vector<double> values);

  std::size_t num_blocks() const { return dims_.size(); }
  std::size_t total_dim() const { return values_.size(); }
  std::size_t offset(std::size_t i) const { return offsets_[i]; }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<std::size_t>& offsets() const { return offsets_; }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }
  std::span<double> block(std::size_t i) { return flat().subspan(offsets_[i], dims_[i]); }
  std::span<const double> block(std::size_t i) const {
    return flat().subspan(offsets_[i], dims_[i]);
  }

  bool AllFinite() const;

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;
};

/// Returns params + delta * u; params is left untouched.
PolicyParams Perturb(const PolicyParams& params, double delta, std::span<const double> u);

enum class FeatureKind {
  kSquaredDistance,  // phi_l = ||o - c_l||^2, the form used in the warehouse study
  kGaussian,         // phi_l = exp(-||o - c_l||^2)
};

FeatureKind ParseFeatureKind(const std::string& s);
std::string ToString(FeatureKind k);

using Range = std::pair<double, double>;

/// n_c centers spaced evenly along the main diagonal of the box, at fractions
/// k / (n_c + 1), k = 1..n_c. Each center is one row of the result.
std::vector<std::vector<double>> MakeCenters(std::span<const Range> box, int num_centers);

/// Per-agent RBF-softmax policy for the warehouse environment.
///
/// Agent i has one softmax slot per out-neighbor (in ascending order) followed
/// by a final self slot for the retained fraction. Its block holds
/// theta_ij(l) at index slot * n_c + l, so d_i = n_c * (|N_i^out| + 1).
class RbfPolicy {
 public:
  struct Options {
    int num_centers = 4;
    Range stock_range{-1.0, 2.0};
    Range demand_range{0.0, 0.5};
    FeatureKind feature = FeatureKind::kSquaredDistance;
  };

  RbfPolicy(const CoordinationGraph& g, Options opts);

  int num_agents() const { return static_cast<int>(centers_.size()); }
  int num_centers() const { return opts_.num_centers; }
  const Options& options() const { return opts_; }
  std::size_t num_slots(AgentId i) const { return slots_[i]; }
  std::size_t obs_dim(AgentId i) const { return centers_[i].front().size(); }
  const std::vector<std::vector<double>>& centers(AgentId i) const { return centers_[i]; }

  std::vector<std::size_t> BlockDims() const;
  PolicyParams ZeroParams() const;

  /// Feature vector phi_l(o), l = 1..n_c.
  std::vector<double> Features(AgentId i, std::span<const double> obs) const;

  /// z_ij = sum_l phi_l(o_i) theta_ij(l), one entry per slot (self last).
  std::vector<double> Scores(AgentId i, std::span<const double> block,
                             std::span<const double> obs) const;

  /// Out-neighbor fractions only; the self fraction is whatever remains.
  std::vector<double> Act(const PolicyParams& params, AgentId i,
                          std::span<const double> obs) const;

  /// Binds parameters into a callable usable by RunRollout. The returned
  /// callable references both this policy and params.
  LocalPolicy Bind(const PolicyParams& params) const;

 private:
  Options opts_;
  std::vector<std::size_t> slots_;
  std::vector<std::vector<std::vector<double>>> centers_;  // [agent][l][dim]
};

/// a_j = exp(-z_j) / sum_k exp(-z_k), over all slots.
std::vector<double> SoftmaxAllocation(std::span<const double> scores);

// Checkpoints. Binary layout (little-endian host order):
//   "DMARLCK1" | u64 num_blocks | u64 dims[num_blocks] | f64 values[total]
void WriteCheckpointBinary(std::ostream& os, const PolicyParams& p);
PolicyParams ReadCheckpointBinary(std::istream& is);
std::string CheckpointToJson(const PolicyParams& p);
PolicyParams CheckpointFromJson(const std::string& text);

}  // namespace dmarl
