#include "dmarl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace dmarl {

PolicyParams::PolicyParams(std::vector<std::size_t> block_dims)
    : dims_(std::move(block_dims)), offsets_(dims_.size()) {
  std::size_t off = 0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    offsets_[i] = off;
    off += dims_[i];
  }
  values_.assign(off, 0.0);
}

PolicyParams::PolicyParams(std::vector<std::size_t> block_dims, std::vector<double> values)
    : PolicyParams(std::move(block_dims)) {
  if (values.size() != values_.size())
    throw PolicyError("parameter vector has " + std::to_string(values.size()) +
                      " entries, block layout needs " + std::to_string(values_.size()));
  values_ = std::move(values);
}

bool PolicyParams::AllFinite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

PolicyParams Perturb(const PolicyParams& params, double delta, std::span<const double> u) {
  if (u.size() != params.total_dim())
    throw PolicyError("perturbation has dimension " + std::to_string(u.size()) + ", expected " +
                      std::to_string(params.total_dim()));
  PolicyParams out = params;
  auto v = out.flat();
  for (std::size_t k = 0; k < v.size(); ++k) v[k] += delta * u[k];
  return out;
}

FeatureKind ParseFeatureKind(const std::string& s) {
  if (s == "squared_distance") return FeatureKind::kSquaredDistance;
  if (s == "gaussian") return FeatureKind::kGaussian;
  throw PolicyError("unknown feature kind '" + s + "' (expected squared_distance or gaussian)");
}

std::string ToString(FeatureKind k) {
  return k == FeatureKind::kGaussian ? "gaussian" : "squared_distance";
}

std::vector<std::vector<double>> MakeCenters(std::span<const Range> box, int num_centers) {
  if (num_centers < 1) throw PolicyError("num_centers must be >= 1");
  if (box.empty()) throw PolicyError("observation box has no dimensions");
  for (const auto& [lo, hi] : box)
    if (!(lo < hi)) throw PolicyError("degenerate observation range: lo must be below hi");
  std::vector<std::vector<double>> centers(num_centers, std::vector<double>(box.size()));
  for (int k = 1; k <= num_centers; ++k) {
    const double frac = static_cast<double>(k) / static_cast<double>(num_centers + 1);
    for (std::size_t dim = 0; dim < box.size(); ++dim)
      centers[k - 1][dim] = box[dim].first + (box[dim].second - box[dim].first) * frac;
  }
  return centers;
}

RbfPolicy::RbfPolicy(const CoordinationGraph& g, Options opts) : opts_(opts) {
  const int n = g.num_agents();
  slots_.resize(n);
  centers_.resize(n);
  for (AgentId i = 0; i < n; ++i) {
    slots_[i] = g.out_neighbors(i).size() + 1;
    std::vector<Range> box(g.in_neighbors(i).size() + 1, opts_.stock_range);
    box.push_back(opts_.demand_range);
    centers_[i] = MakeCenters(box, opts_.num_centers);
  }
}

std::vector<std::size_t> RbfPolicy::BlockDims() const {
  std::vector<std::size_t> dims(slots_.size());
  for (std::size_t i = 0; i < dims.size(); ++i)
    dims[i] = slots_[i] * static_cast<std::size_t>(opts_.num_centers);
  return dims;
}

PolicyParams RbfPolicy::ZeroParams() const { return PolicyParams(BlockDims()); }

std::vector<double> RbfPolicy::Features(AgentId i, std::span<const double> obs) const {
  const auto& cs = centers_[i];
  if (obs.size() != cs.front().size())
    throw PolicyError("agent " + std::to_string(i + 1) + " observation has dimension " +
                      std::to_string(obs.size()) + ", expected " +
                      std::to_string(cs.front().size()));
  std::vector<double> phi(cs.size());
  for (std::size_t l = 0; l < cs.size(); ++l) {
    double sq = 0.0;
    for (std::size_t k = 0; k < obs.size(); ++k) {
      const double diff = obs[k] - cs[l][k];
      sq += diff * diff;
    }
    phi[l] = opts_.feature == FeatureKind::kGaussian ? std::exp(-sq) : sq;
  }
  return phi;
}

std::vector<double> RbfPolicy::Scores(AgentId i, std::span<const double> block,
                                      std::span<const double> obs) const {
  const std::size_t nc = static_cast<std::size_t>(opts_.num_centers);
  if (block.size() != slots_[i] * nc)
    throw PolicyError("agent " + std::to_string(i + 1) + " parameter block has dimension " +
                      std::to_string(block.size()) + ", expected " +
                      std::to_string(slots_[i] * nc));
  const std::vector<double> phi = Features(i, obs);
  std::vector<double> z(slots_[i], 0.0);
  for (std::size_t s = 0; s < z.size(); ++s)
    for (std::size_t l = 0; l < nc; ++l) z[s] += phi[l] * block[s * nc + l];
  return z;
}

std::vector<double> SoftmaxAllocation(std::span<const double> scores) {
  if (scores.empty()) throw PolicyError("softmax over an empty slot set");
  for (double z : scores)
    if (!std::isfinite(z)) throw PolicyError("non-finite softmax score");
  // exp(-z) is shift-invariant; anchor at the smallest score so the largest
  // weight is exactly 1.
  const double zmin = *std::min_element(scores.begin(), scores.end());
  std::vector<double> a(scores.size());
  double total = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    a[k] = std::exp(-(scores[k] - zmin));
    total += a[k];
  }
  for (double& v : a) v /= total;
  return a;
}

std::vector<double> RbfPolicy::Act(const PolicyParams& params, AgentId i,
                                   std::span<const double> obs) const {
  std::vector<double> a = SoftmaxAllocation(Scores(i, params.block(i), obs));
  a.pop_back();  // self slot: retained stock
  return a;
}

LocalPolicy RbfPolicy::Bind(const PolicyParams& params) const {
  return [this, &params](AgentId i, std::span<const double> obs) { return Act(params, i, obs); };
}

namespace {

constexpr char kMagic[8] = {'D', 'M', 'A', 'R', 'L', 'C', 'K', '1'};

template <typename T>
void WriteRaw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T ReadRaw(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw PolicyError("truncated checkpoint");
  return v;
}

}  // namespace

void WriteCheckpointBinary(std::ostream& os, const PolicyParams& p) {
  os.write(kMagic, sizeof kMagic);
  WriteRaw<std::uint64_t>(os, p.num_blocks());
  for (std::size_t d : p.dims()) WriteRaw<std::uint64_t>(os, d);
  for (double v : p.flat()) WriteRaw(os, v);
}

PolicyParams ReadCheckpointBinary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw PolicyError("not a checkpoint file (bad magic)");
  const auto n = ReadRaw<std::uint64_t>(is);
  std::vector<std::size_t> dims(n);
  std::size_t total = 0;
  for (auto& d : dims) total += d = ReadRaw<std::uint64_t>(is);
  std::vector<double> values(total);
  for (double& v : values) v = ReadRaw<double>(is);
  return PolicyParams(std::move(dims), std::move(values));
}

std::string CheckpointToJson(const PolicyParams& p) {
  nlohmann::json j;
  j["format"] = "dmarl-checkpoint";
  j["version"] = 1;
  j["dims"] = p.dims();
  j["offsets"] = p.offsets();
  j["values"] = std::vector<double>(p.flat().begin(), p.flat().end());
  return j.dump();
}

PolicyParams CheckpointFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    return PolicyParams(j.at("dims").get<std::vector<std::size_t>>(),
                        j.at("values").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw PolicyError(std::string("malformed JSON checkpoint: ") + e.what());
  }
}

}  // namespace dmarl
