#include "dmarl/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dmarl::validation {

// ---------------------------------------------------------------------------
// Moment estimation

MomentAccumulator::MomentAccumulator(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

void MomentAccumulator::Add(std::span<const double> sample) {
  ++n_;
  const double inv = 1.0 / static_cast<double>(n_);
  double sq = 0.0;
  for (std::size_t k = 0; k < mean_.size(); ++k) {
    const double x = sample[k];
    const double d = x - mean_[k];
    mean_[k] += d * inv;
    m2_[k] += d * (x - mean_[k]);
    sq += x * x;
  }
  const double d = sq - sq_mean_;
  sq_mean_ += d * inv;
  sq_m2_ += d * (sq - sq_mean_);
}

MomentEstimate MomentAccumulator::Result() const {
  MomentEstimate e;
  e.samples = n_;
  e.mean = mean_;
  e.std_error.assign(mean_.size(), 0.0);
  e.second_moment = sq_mean_;
  if (n_ > 1) {
    const double n = static_cast<double>(n_);
    for (std::size_t k = 0; k < mean_.size(); ++k) e.std_error[k] = std::sqrt(m2_[k] / (n - 1) / n);
    e.second_moment_se = std::sqrt(sq_m2_ / (n - 1) / n);
  }
  return e;
}

namespace {

void CheckFinite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string("non-finite value from ") + what);
}

std::vector<double> Gaussian(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> u(d);
  for (double& v : u) v = normal(rng);
  return u;
}

}  // namespace

std::vector<MomentEstimate> McSmoothedGradients(const VectorField& f,
                                                std::span<const double> theta, double delta,
                                                std::size_t samples, Rng& rng) {
  if (samples < 1000) throw std::invalid_argument("Monte-Carlo estimate needs at least 1000 samples");
  if (!(delta > 0.0)) throw std::invalid_argument("smoothing radius must be positive");
  const std::size_t d = theta.size();
  std::vector<MomentAccumulator> acc;
  std::vector<double> x(d), sample(d);
  for (std::size_t m = 0; m < samples; ++m) {
    const std::vector<double> u = Gaussian(d, rng);
    for (std::size_t k = 0; k < d; ++k) x[k] = theta[k] + delta * u[k];
    const std::vector<double> vals = f(x);
    if (acc.empty()) acc.assign(vals.size(), MomentAccumulator(d));
    for (std::size_t o = 0; o < vals.size(); ++o) {
      CheckFinite(vals[o], "objective");
      const double scale = vals[o] / delta;
      for (std::size_t k = 0; k < d; ++k) sample[k] = scale * u[k];
      acc[o].Add(sample);
    }
  }
  std::vector<MomentEstimate> out;
  for (const auto& a : acc) out.push_back(a.Result());
  return out;
}

MomentEstimate McSmoothedGradient(const ScalarField& f, std::span<const double> theta,
                                  double delta, std::size_t samples, Rng& rng) {
  return McSmoothedGradients([&](std::span<const double> x) { return std::vector<double>{f(x)}; },
                             theta, delta, samples, rng)
      .front();
}

std::vector<double> FiniteDifferenceGradient(const ScalarField& f, std::span<const double> theta,
                                             double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  std::vector<double> x(theta.begin(), theta.end()), g(theta.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double up = f(x);
    x[k] = orig - h;
    const double down = f(x);
    x[k] = orig;
    CheckFinite(up, "objective");
    CheckFinite(down, "objective");
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Synthetic objectives

std::string ToString(SyntheticFamily f) {
  switch (f) {
    case SyntheticFamily::kQuadratic: return "quadratic";
    case SyntheticFamily::kCosine: return "cosine";
    case SyntheticFamily::kAbsolute: return "absolute";
  }
  return "?";
}

SyntheticObjective::SyntheticObjective(GraphArtifacts graph, SyntheticFamily family,
                                       std::vector<std::size_t> block_dims,
                                       std::vector<SyntheticTerm> terms,
                                       std::vector<double> noise_std)
    : graph_(std::move(graph)),
      family_(family),
      dims_(std::move(block_dims)),
      terms_(std::move(terms)),
      noise_std_(std::move(noise_std)) {
  const auto n = static_cast<std::size_t>(graph_.graph.num_agents());
  if (dims_.size() != n || terms_.size() != n || noise_std_.size() != n)
    throw std::invalid_argument("synthetic objective needs one block, term and noise level per agent");
  offsets_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    offsets_[i] = total_;
    total_ += dims_[i];
  }
}

double SyntheticObjective::Term(AgentId i, std::span<const double> theta) const {
  const SyntheticTerm& t = terms_[i];
  const std::size_t m = t.index.size();
  double y[64];
  std::vector<double> heap;
  double* yp = y;
  if (m > 64) {
    heap.resize(m);
    yp = heap.data();
  }
  for (std::size_t k = 0; k < m; ++k) yp[k] = theta[t.index[k]] - t.center[k];
  switch (family_) {
    case SyntheticFamily::kQuadratic: {
      double q = 0.0;
      for (std::size_t a = 0; a < m; ++a) {
        double row = 0.0;
        for (std::size_t b = 0; b < m; ++b) row += t.matrix[a * m + b] * yp[b];
        q += yp[a] * row;
      }
      return t.offset - q;
    }
    case SyntheticFamily::kCosine: {
      double dot = 0.0;
      for (std::size_t k = 0; k < m; ++k) dot += t.direction[k] * yp[k];
      return t.scale * std::cos(dot + t.phase);
    }
    case SyntheticFamily::kAbsolute: {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += std::abs(yp[k]);
      return -t.scale * s;
    }
  }
  return 0.0;
}

std::vector<double> SyntheticObjective::Terms(std::span<const double> theta) const {
  std::vector<double> v(terms_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = Term(static_cast<AgentId>(i), theta);
  return v;
}

double SyntheticObjective::Global(std::span<const double> theta) const {
  double s = 0.0;
  for (std::size_t i = 0; i < terms_.size(); ++i) s += Term(static_cast<AgentId>(i), theta);
  return s;
}

double SyntheticObjective::Local(AgentId i, std::span<const double> theta) const {
  double s = 0.0;
  for (AgentId j : graph_.reach.reach_closed[i]) s += Term(j, theta);
  return s;
}

std::vector<double> SyntheticObjective::TermGradient(AgentId i,
                                                     std::span<const double> theta) const {
  const SyntheticTerm& t = terms_[i];
  const std::size_t m = t.index.size();
  std::vector<double> y(m), gl(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) y[k] = theta[t.index[k]] - t.center[k];
  switch (family_) {
    case SyntheticFamily::kQuadratic:
      for (std::size_t a = 0; a < m; ++a) {
        double row = 0.0;
        for (std::size_t b = 0; b < m; ++b) row += t.matrix[a * m + b] * y[b];
        gl[a] = -2.0 * row;
      }
      break;
    case SyntheticFamily::kCosine: {
      double dot = 0.0;
      for (std::size_t k = 0; k < m; ++k) dot += t.direction[k] * y[k];
      const double s = -t.scale * std::sin(dot + t.phase);
      for (std::size_t k = 0; k < m; ++k) gl[k] = s * t.direction[k];
      break;
    }
    case SyntheticFamily::kAbsolute:
      for (std::size_t k = 0; k < m; ++k)
        gl[k] = y[k] > 0.0 ? -t.scale : (y[k] < 0.0 ? t.scale : 0.0);
      break;
  }
  std::vector<double> g(total_, 0.0);
  for (std::size_t k = 0; k < m; ++k) g[t.index[k]] = gl[k];
  return g;
}

std::vector<double> SyntheticObjective::GlobalGradient(std::span<const double> theta) const {
  std::vector<double> g(total_, 0.0);
  for (std::size_t j = 0; j < terms_.size(); ++j) {
    const auto gj = TermGradient(static_cast<AgentId>(j), theta);
    for (std::size_t k = 0; k < total_; ++k) g[k] += gj[k];
  }
  return g;
}

std::vector<double> SyntheticObjective::LocalGradient(AgentId i,
                                                      std::span<const double> theta) const {
  std::vector<double> g(total_, 0.0);
  for (AgentId j : graph_.reach.reach_closed[i]) {
    const auto gj = TermGradient(j, theta);
    for (std::size_t k = 0; k < total_; ++k) g[k] += gj[k];
  }
  return g;
}

double SyntheticObjective::Bound(AgentId i) const {
  return family_ == SyntheticFamily::kCosine ? terms_[i].scale
                                             : std::numeric_limits<double>::infinity();
}

double SyntheticObjective::Lipschitz(AgentId i) const {
  const SyntheticTerm& t = terms_[i];
  switch (family_) {
    case SyntheticFamily::kCosine: {
      double n2 = 0.0;
      for (double v : t.direction) n2 += v * v;
      return t.scale * std::sqrt(n2);
    }
    case SyntheticFamily::kAbsolute:
      return t.scale * std::sqrt(static_cast<double>(t.index.size()));
    case SyntheticFamily::kQuadratic:
      break;
  }
  return std::numeric_limits<double>::infinity();
}

double SyntheticObjective::LocalBound(AgentId i) const {
  double s = 0.0;
  for (AgentId j : graph_.reach.reach_closed[i]) s += Bound(j);
  return s;
}

double SyntheticObjective::LocalLipschitz(AgentId i) const {
  double s = 0.0;
  for (AgentId j : graph_.reach.reach_closed[i]) s += Lipschitz(j);
  return s;
}

double SyntheticObjective::LocalSigma(AgentId i) const {
  double s = 0.0;
  for (AgentId j : graph_.reach.reach_closed[i]) s += noise_std_[j] * noise_std_[j];
  return std::sqrt(s);
}

double SyntheticObjective::GlobalBound() const {
  double s = 0.0;
  for (int i = 0; i < num_agents(); ++i) s += Bound(i);
  return s;
}

double SyntheticObjective::GlobalSigma() const {
  double s = 0.0;
  for (double v : noise_std_) s += v * v;
  return std::sqrt(s);
}

std::vector<double> SyntheticObjective::Observe(std::span<const double> theta,
                                                std::span<const double> xi) const {
  std::vector<double> w = Terms(theta);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += xi[i];
  return w;
}

std::vector<double> SyntheticObjective::DrawNoise(Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> xi(noise_std_.size());
  for (std::size_t i = 0; i < xi.size(); ++i) xi[i] = noise_std_[i] * normal(rng);
  return xi;
}

SyntheticObjective MakeSynthetic(const CoordinationGraph& graph, Rng& rng,
                                 const SyntheticOptions& opts) {
  GraphArtifacts art(graph);
  const int n = graph.num_agents();
  std::uniform_int_distribution<std::size_t> dim_dist(opts.min_block_dim, opts.max_block_dim);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::size_t> dims(n), offsets(n);
  std::size_t total = 0;
  for (int i = 0; i < n; ++i) {
    dims[i] = dim_dist(rng);
    offsets[i] = total;
    total += dims[i];
  }

  std::vector<SyntheticTerm> terms(n);
  for (AgentId i = 0; i < n; ++i) {
    SyntheticTerm& t = terms[i];
    std::set<AgentId> deps(art.reach.ancestors[i].begin(), art.reach.ancestors[i].end());
    deps.insert(i);
    t.deps.assign(deps.begin(), deps.end());
    for (AgentId k : t.deps)
      for (std::size_t c = 0; c < dims[k]; ++c) t.index.push_back(offsets[k] + c);
    const std::size_t m = t.index.size();
    t.center.resize(m);
    for (double& c : t.center) c = 2.0 * unit(rng) - 1.0;
    switch (opts.family) {
      case SyntheticFamily::kQuadratic: {
        // Q = R^T R / m + 0.5 I keeps the spectrum O(1) regardless of m.
        std::vector<double> r(m * m);
        for (double& v : r) v = normal(rng);
        t.matrix.assign(m * m, 0.0);
        for (std::size_t a = 0; a < m; ++a)
          for (std::size_t b = 0; b < m; ++b) {
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k) s += r[k * m + a] * r[k * m + b];
            t.matrix[a * m + b] = s / static_cast<double>(m) + (a == b ? 0.5 : 0.0);
          }
        t.offset = -(0.5 + unit(rng));
        break;
      }
      case SyntheticFamily::kCosine:
        t.direction.resize(m);
        for (double& v : t.direction) v = normal(rng) / std::sqrt(static_cast<double>(m));
        t.scale = 0.5 + unit(rng);
        t.phase = 2.0 * std::numbers::pi * unit(rng);
        break;
      case SyntheticFamily::kAbsolute:
        t.scale = 0.5 + unit(rng);
        break;
    }
  }
  return SyntheticObjective(std::move(art), opts.family, std::move(dims), std::move(terms),
                            std::vector<double>(n, opts.noise_std));
}

bool CheckDependencyStructure(const SyntheticObjective& obj, Rng& rng, std::string* why) {
  const auto& reach = obj.graph().reach;
  std::vector<double> theta = Gaussian(obj.total_dim(), rng);
  for (AgentId i = 0; i < obj.num_agents(); ++i) {
    std::set<AgentId> expected(reach.ancestors[i].begin(), reach.ancestors[i].end());
    expected.insert(i);
    if (std::vector<AgentId>(expected.begin(), expected.end()) != obj.term(i).deps) {
      if (why) *why = "term " + std::to_string(i + 1) + " declares the wrong dependency set";
      return false;
    }
    const double base = obj.Term(i, theta);
    for (AgentId k = 0; k < obj.num_agents(); ++k) {
      if (expected.count(k)) continue;
      std::vector<double> moved = theta;
      for (std::size_t c = 0; c < obj.block_dims()[k]; ++c)
        moved[obj.block_offset(k) + c] += 10.0 * std::normal_distribution<double>()(rng);
      if (obj.Term(i, moved) != base) {
        if (why)
          *why = "term " + std::to_string(i + 1) + " changes with block " + std::to_string(k + 1);
        return false;
      }
    }
  }
  return true;
}

CoordinationGraph RandomGraph(int n, double p, Rng& rng, bool weakly_connected) {
  std::set<Edge> edges;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (weakly_connected)
    for (int v = 1; v < n; ++v) {
      int u = std::uniform_int_distribution<int>(0, v - 1)(rng);
      if (unit(rng) < 0.5) edges.insert({u, v});
      else edges.insert({v, u});
    }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b && unit(rng) < p) edges.insert({a, b});
  return CoordinationGraph::FromEdges(n, std::vector<Edge>(edges.begin(), edges.end()));
}

NoiseTrace SyntheticEnvironment::DrawNoise(Rng& rng) const {
  NoiseTrace t;
  t.demand_noise.push_back(obj_.DrawNoise(rng));
  return t;
}

std::vector<double> SyntheticEnvironment::Returns(const PolicyParams& theta,
                                                  const NoiseTrace& xi) const {
  return obj_.Observe(theta.flat(), xi.demand_noise.front());
}

// ---------------------------------------------------------------------------
// Smoothing gap and oracle moments

SmoothingGapReport CheckSmoothingGap(const ScalarField& f, double lipschitz, double delta,
                                     const std::vector<std::vector<double>>& thetas,
                                     std::size_t samples, Rng& rng) {
  if (thetas.empty()) throw std::invalid_argument("no evaluation points");
  if (samples < 2) throw std::invalid_argument("need at least two samples");
  SmoothingGapReport rep;
  const std::size_t d = thetas.front().size();
  rep.bound = delta * std::sqrt(static_cast<double>(d)) * lipschitz;
  for (const auto& theta : thetas) {
    MomentAccumulator acc(1);
    std::vector<double> x(d);
    for (std::size_t m = 0; m < samples; ++m) {
      const auto u = Gaussian(d, rng);
      for (std::size_t k = 0; k < d; ++k) x[k] = theta[k] + delta * u[k];
      const double v = f(x);
      CheckFinite(v, "objective");
      acc.Add(std::span<const double>(&v, 1));
    }
    const MomentEstimate e = acc.Result();
    const double gap = std::abs(e.mean[0] - f(theta));
    rep.gaps.push_back(gap);
    rep.std_errors.push_back(e.std_error[0]);
    if (gap >= rep.worst_gap) {
      rep.worst_gap = gap;
      rep.worst_gap_se = e.std_error[0];
    }
  }
  return rep;
}

SecondMomentEstimate EmpiricalSecondMoment(const OracleSampler& sampler, std::size_t samples,
                                           Rng& rng) {
  if (samples < 10000) throw std::invalid_argument("second-moment estimate needs at least 10^4 samples");
  std::unique_ptr<MomentAccumulator> acc;
  std::vector<double> sq;
  for (std::size_t m = 0; m < samples; ++m) {
    const GradientEstimate g = sampler(rng);
    const std::size_t nb = g.blocks.num_blocks();
    if (!acc) {
      acc = std::make_unique<MomentAccumulator>(nb + 1);
      sq.resize(nb + 1);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < nb; ++i) {
      double s = 0.0;
      for (double v : g.blocks.block(i)) s += v * v;
      sq[i] = s;
      total += s;
    }
    sq[nb] = total;
    acc->Add(sq);
  }
  const MomentEstimate e = acc->Result();
  SecondMomentEstimate out;
  out.samples = e.samples;
  out.block_mean.assign(e.mean.begin(), e.mean.end() - 1);
  out.block_se.assign(e.std_error.begin(), e.std_error.end() - 1);
  out.total_mean = e.mean.back();
  out.total_se = e.std_error.back();
  return out;
}

OracleSampler MakeSyntheticSampler(const SyntheticObjective& obj, std::vector<double> theta,
                                   OracleConfig cfg) {
  cfg.Validate();
  auto residual = std::make_shared<ResidualState>();
  return [&obj, theta = std::move(theta), cfg, residual](Rng& rng) {
    const auto& dims = obj.block_dims();
    const std::vector<double> u = SamplePerturbation(dims, rng);
    const std::vector<double> xi = obj.DrawNoise(rng);
    std::vector<double> x(theta.size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = theta[k] + cfg.delta * u[k];
    const std::size_t n = static_cast<std::size_t>(obj.num_agents());
    auto scoped = [&](const std::vector<double>& w) {
      if (cfg.scope == OracleScope::kCentralized)
        return std::vector<double>(n, CentralizedValue(w, n));
      return LocalValueSums(obj.graph().reach, w);
    };
    const std::vector<double> values = scoped(obj.Observe(x, xi));
    switch (cfg.flavor) {
      case OracleFlavor::kOnePoint:
        return OnePoint(values, u, dims, cfg.delta);
      case OracleFlavor::kTwoPoint:
        return TwoPoint(values, scoped(obj.Observe(theta, xi)), u, dims, cfg.delta, 0, 0);
      case OracleFlavor::kResidual:
        break;
    }
    return Residual(values, *residual, u, dims, cfg.delta);
  };
}

MomentEstimate OracleMean(const OracleSampler& sampler, std::size_t samples, Rng& rng) {
  std::unique_ptr<MomentAccumulator> acc;
  for (std::size_t m = 0; m < samples; ++m) {
    const GradientEstimate g = sampler(rng);
    if (!acc) acc = std::make_unique<MomentAccumulator>(g.blocks.total_dim());
    acc->Add(g.blocks.flat());
  }
  return acc->Result();
}

double NormalUpperQuantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("tail probability must be in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(mid / std::numbers::sqrt2) > p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double FamilyWiseThreeSigma(std::size_t comparisons) {
  if (comparisons <= 1) return 3.0;
  const double alpha = std::erfc(3.0 / std::numbers::sqrt2);
  const double per = -std::expm1(std::log1p(-alpha) / static_cast<double>(comparisons));
  return NormalUpperQuantile(per / 2.0);
}

// ---------------------------------------------------------------------------
// Reports

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::string SuiteReport::ToText() const {
  std::ostringstream os;
  os << "[" << (passed() ? "PASS" : "FAIL") << "] " << suite << " (" << seconds << " s)\n";
  for (const auto& c : checks)
    os << "    " << (c.passed ? "ok   " : "FAIL ") << c.name << ": " << c.detail << "\n";
  return os.str();
}

std::string SuiteReport::ToJson() const {
  nlohmann::json j;
  j["suite"] = suite;
  j["passed"] = passed();
  j["seconds"] = seconds;
  for (const auto& c : checks)
    j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return j.dump(2);
}

namespace {

constexpr double kThreeSigmaTail = 0.0026997960632601866;  // P(|Z| > 3)

std::size_t Scaled(std::size_t base, double scale, std::size_t floor) {
  return std::max<std::size_t>(floor, static_cast<std::size_t>(std::llround(base * scale)));
}

std::string Fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

class Timer {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Two checks over a collection of z-scores: family-wise maximum and the count
// of individual 3-sigma exceedances against its binomial expectation.
void AddZChecks(SuiteReport& rep, const std::string& label, const std::vector<double>& z) {
  double worst = 0.0;
  std::size_t over = 0;
  for (double v : z) {
    worst = std::max(worst, std::abs(v));
    if (std::abs(v) > 3.0) ++over;
  }
  const double m = static_cast<double>(z.size());
  const double limit = FamilyWiseThreeSigma(z.size());
  rep.checks.push_back({label + " (joint 3-sigma)", worst <= limit,
                        "max |z| = " + Fmt(worst) + " over " + std::to_string(z.size()) +
                            " coordinates, joint limit " + Fmt(limit)});
  const double expect = m * kThreeSigmaTail;
  const double allowed = expect + 3.0 * std::sqrt(m * kThreeSigmaTail * (1.0 - kThreeSigmaTail));
  rep.checks.push_back({label + " (3-sigma exceedance rate)", static_cast<double>(over) <= allowed,
                        std::to_string(over) + " coordinates beyond 3 sigma, expected " +
                            Fmt(expect) + ", allowed " + Fmt(allowed)});
}

}  // namespace

SuiteReport GraphSuite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport rep;
  rep.suite = "graph";
  Rng rng = DeriveRng(opts.seed, {11});
  const std::size_t count = Scaled(500, opts.scale, 5);
  std::size_t closure_bad = 0, clique_bad = 0, cross_bad = 0, partition_bad = 0,
              same_cluster_bad = 0, dag_bad = 0, inverse_bad = 0, weak_bad = 0;
  for (std::size_t g = 0; g < count; ++g) {
    const int n = std::uniform_int_distribution<int>(1, 12)(rng);
    const double p = std::uniform_real_distribution<double>(0.0, 0.35)(rng);
    const CoordinationGraph graph = RandomGraph(n, p, rng, true);
    const GraphArtifacts a(graph);
    if (WeakComponents(graph).size() != 1) ++weak_bad;
    const auto closure = TransitiveClosure(graph);
    for (AgentId i = 0; i < n; ++i)
      for (AgentId j = 0; j < n; ++j) {
        const bool expect = i != j && closure[i][j];
        if (a.learning.has_edge(j, i) != expect) ++closure_bad;
        const bool in_reach = std::binary_search(a.reach.reach[i].begin(), a.reach.reach[i].end(), j);
        if (in_reach != closure[i][j]) ++closure_bad;
        const bool in_anc =
            std::binary_search(a.reach.ancestors[j].begin(), a.reach.ancestors[j].end(), i);
        if (in_reach != in_anc) ++inverse_bad;
      }
    std::vector<int> seen(n, 0);
    for (const auto& c : a.clusters.clusters) {
      for (AgentId x : c) ++seen[x];
      for (AgentId x : c)
        for (AgentId y : c) {
          if (x != y && !a.learning.has_edge(x, y)) ++clique_bad;
          if (a.reach.reach_closed[x] != a.reach.reach_closed[y]) ++same_cluster_bad;
          if (!closure[x][y] && x != y) ++partition_bad;
        }
    }
    for (int s : seen)
      if (s != 1) ++partition_bad;
    // Maximality: vertices in different clusters are not mutually reachable.
    for (AgentId x = 0; x < n; ++x)
      for (AgentId y = 0; y < n; ++y)
        if (a.clusters.cluster_of[x] != a.clusters.cluster_of[y] && closure[x][y] && closure[y][x])
          ++partition_bad;
    const int nc = static_cast<int>(a.clusters.size());
    for (int ca = 0; ca < nc; ++ca)
      for (int cb = 0; cb < nc; ++cb) {
        if (ca == cb) continue;
        const auto& A = a.clusters.clusters[ca];
        const auto& B = a.clusters.clusters[cb];
        std::size_t linked = 0;
        for (AgentId x : A)
          for (AgentId y : B) linked += a.learning.has_edge(x, y);
        if (linked != 0 && linked != A.size() * B.size()) ++cross_bad;
      }
    if (!IsAcyclic(a.dag)) ++dag_bad;
  }
  auto add = [&](const std::string& name, std::size_t bad) {
    rep.checks.push_back({name, bad == 0,
                          std::to_string(bad) + " violations over " + std::to_string(count) + " graphs"});
  };
  add("generated graphs are weakly connected", weak_bad);
  add("learning edges match brute-force transitive closure", closure_bad);
  add("reach and ancestor sets are mutually inverse", inverse_bad);
  add("clusters are a maximal SCC partition", partition_bad);
  add("same-cluster agents share I^L", same_cluster_bad);
  add("clusters are cliques in the learning graph", clique_bad);
  add("cross-cluster links are complete", cross_bad);
  add("cluster condensation is acyclic", dag_bad);
  rep.seconds = timer.Seconds();
  return rep;
}

SuiteReport Lemma1Suite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport rep;
  rep.suite = "lemma1";
  Rng rng = DeriveRng(opts.seed, {21});
  const std::size_t instances = Scaled(50, opts.scale, 2);
  const std::size_t nonsmooth = Scaled(10, opts.scale, 1);
  const std::size_t thetas = 20, pairs = 5;
  const std::size_t samples = Scaled(100000, opts.scale, 1000);
  const double rel_tol = 1e-6, h = 1e-5;

  std::size_t structure_bad = 0, exact_bad = 0, fd_bad = 0, comparisons = 0;
  double worst_fd = 0.0;
  std::vector<double> z_scores;

  auto smoothed_blocks = [&](const SyntheticObjective& obj) {
    for (std::size_t p = 0; p < pairs; ++p) {
      const auto theta = Gaussian(obj.total_dim(), rng);
      const double delta = std::uniform_real_distribution<double>(0.1, 0.5)(rng);
      Rng rng_global = DeriveRng(rng(), {1});
      Rng rng_local = DeriveRng(rng(), {2});
      const MomentEstimate global = McSmoothedGradient(
          [&](std::span<const double> x) { return obj.Global(x); }, theta, delta, samples,
          rng_global);
      const auto local = McSmoothedGradients(
          [&](std::span<const double> x) {
            const auto t = obj.Terms(x);
            return LocalValueSums(obj.graph().reach, t);
          },
          theta, delta, samples, rng_local);
      for (AgentId i = 0; i < obj.num_agents(); ++i)
        for (std::size_t c = 0; c < obj.block_dims()[i]; ++c) {
          const std::size_t k = obj.block_offset(i) + c;
          const double se = std::hypot(global.std_error[k], local[i].std_error[k]);
          z_scores.push_back((global.mean[k] - local[i].mean[k]) / se);
        }
    }
  };

  for (std::size_t inst = 0; inst < instances; ++inst) {
    const int n = std::uniform_int_distribution<int>(3, 6)(rng);
    const auto graph = RandomGraph(n, 0.2, rng, true);
    const SyntheticObjective obj = MakeSynthetic(graph, rng, {SyntheticFamily::kQuadratic, 1, 2, 0.0});
    if (!CheckDependencyStructure(obj, rng)) ++structure_bad;
    for (std::size_t t = 0; t < thetas; ++t) {
      const auto theta = Gaussian(obj.total_dim(), rng);
      const auto g = obj.GlobalGradient(theta);
      const auto fd_global =
          FiniteDifferenceGradient([&](std::span<const double> x) { return obj.Global(x); }, theta, h);
      for (AgentId i = 0; i < n; ++i) {
        const auto gl = obj.LocalGradient(i, theta);
        const auto fd_local = FiniteDifferenceGradient(
            [&](std::span<const double> x) { return obj.Local(i, x); }, theta, h);
        double scale = 1.0;
        for (std::size_t c = 0; c < obj.block_dims()[i]; ++c)
          scale = std::max(scale, std::abs(g[obj.block_offset(i) + c]));
        for (std::size_t c = 0; c < obj.block_dims()[i]; ++c) {
          const std::size_t k = obj.block_offset(i) + c;
          ++comparisons;
          if (g[k] != gl[k]) ++exact_bad;
          const double e = std::max(std::abs(fd_global[k] - g[k]), std::abs(fd_local[k] - gl[k])) / scale;
          worst_fd = std::max(worst_fd, e);
          if (e > rel_tol) ++fd_bad;
        }
      }
    }
    smoothed_blocks(obj);
  }
  for (std::size_t inst = 0; inst < nonsmooth; ++inst) {
    const int n = std::uniform_int_distribution<int>(3, 6)(rng);
    const auto graph = RandomGraph(n, 0.2, rng, true);
    const SyntheticObjective obj = MakeSynthetic(graph, rng, {SyntheticFamily::kAbsolute, 1, 2, 0.0});
    if (!CheckDependencyStructure(obj, rng)) ++structure_bad;
    smoothed_blocks(obj);
  }

  rep.checks.push_back({"synthetic terms respect the graph dependency rule", structure_bad == 0,
                        std::to_string(structure_bad) + " bad instances"});
  rep.checks.push_back({"analytic block gradients of J and J^_i are identical", exact_bad == 0,
                        std::to_string(exact_bad) + " mismatches over " +
                            std::to_string(comparisons) + " coordinates"});
  rep.checks.push_back({"finite differences confirm both gradients", fd_bad == 0,
                        "worst relative error " + Fmt(worst_fd) + " (limit 1e-6)"});
  AddZChecks(rep, "smoothed block gradients of J and J^_i agree", z_scores);
  rep.seconds = timer.Seconds();
  return rep;
}

namespace {

// A fixed small coupled instance: 1 -> 2 -> 3, 1 -> 4, 4 -> 3.
SyntheticObjective UnbiasednessInstance(Rng& rng, SyntheticFamily family, double noise) {
  const auto g = CoordinationGraph::FromOneBased(4, {{1, 2}, {2, 3}, {1, 4}, {4, 3}});
  return MakeSynthetic(g, rng, {family, 2, 2, noise});
}

}  // namespace

SuiteReport UnbiasednessSuite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport rep;
  rep.suite = "unbiasedness";
  Rng rng = DeriveRng(opts.seed, {31});
  const std::size_t samples = Scaled(1000000, opts.scale, 1000);
  const SyntheticObjective obj = UnbiasednessInstance(rng, SyntheticFamily::kQuadratic, 0.1);
  // Evaluate near the optimum of each term so values stay O(1).
  std::vector<double> theta(obj.total_dim());
  for (double& v : theta) v = 0.3 * std::normal_distribution<double>()(rng);
  const auto grad = obj.GlobalGradient(theta);  // smoothing a quadratic only shifts it
  const double delta = 0.5;
  for (OracleFlavor f : {OracleFlavor::kOnePoint, OracleFlavor::kTwoPoint, OracleFlavor::kResidual}) {
    auto sampler = MakeSyntheticSampler(obj, theta, {delta, f, OracleScope::kDistributed});
    Rng r = DeriveRng(opts.seed, {32, static_cast<std::uint64_t>(f)});
    const MomentEstimate e = OracleMean(sampler, samples, r);
    double worst = 0.0;
    bool ok = true;
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double z = (e.mean[k] - grad[k]) / e.std_error[k];
      worst = std::max(worst, std::abs(z));
      if (std::abs(z) > 3.0) ok = false;
    }
    rep.checks.push_back({ToString(f) + " mean covers the smoothed gradient", ok,
                          "max |z| = " + Fmt(worst) + " over " + std::to_string(grad.size()) +
                              " coordinates, M = " + std::to_string(samples)});
  }
  rep.seconds = timer.Seconds();
  return rep;
}

SuiteReport BoundsSuite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport rep;
  rep.suite = "bounds";
  Rng rng = DeriveRng(opts.seed, {41});
  const std::size_t instances = Scaled(8, opts.scale, 1);
  const std::size_t samples = Scaled(100000, opts.scale, 10000);
  const double delta = 0.5;
  std::size_t one_bad = 0, two_bad = 0, agg_bad = 0, central_bad = 0, blocks = 0, central_blocks = 0;
  double one_ratio = 0.0, two_ratio = 0.0, central_ratio = 0.0;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const int n = std::uniform_int_distribution<int>(6, 8)(rng);
    const auto graph = RandomGraph(n, 0.05, rng, true);
    const SyntheticObjective obj = MakeSynthetic(graph, rng, {SyntheticFamily::kCosine, 1, 3, 0.2});
    const auto theta = Gaussian(obj.total_dim(), rng);
    const std::size_t d = obj.total_dim();

    Rng r1 = DeriveRng(rng(), {1});
    const auto one = EmpiricalSecondMoment(
        MakeSyntheticSampler(obj, theta, {delta, OracleFlavor::kOnePoint, OracleScope::kDistributed}),
        samples, r1);
    Rng r2 = DeriveRng(rng(), {2});
    const auto two = EmpiricalSecondMoment(
        MakeSyntheticSampler(obj, theta, {delta, OracleFlavor::kTwoPoint, OracleScope::kDistributed}),
        samples, r2);

    double l0 = 0.0, s0 = 0.0;
    for (AgentId i = 0; i < n; ++i) {
      ++blocks;
      const std::size_t di = obj.block_dims()[i];
      const double b1 = OnePointSecondMomentBound(obj.LocalBound(i), obj.LocalSigma(i), di, delta);
      const double b2 = TwoPointSecondMomentBound(obj.LocalLipschitz(i), obj.LocalSigma(i), di, d);
      if (one.block_mean[i] > b1 + 3.0 * one.block_se[i]) ++one_bad;
      if (two.block_mean[i] > b2 + 3.0 * two.block_se[i]) ++two_bad;
      one_ratio = std::max(one_ratio, one.block_mean[i] / b1);
      two_ratio = std::max(two_ratio, two.block_mean[i] / b2);
      l0 = std::max(l0, obj.LocalLipschitz(i));
      s0 = std::max(s0, obj.LocalSigma(i));
      if (obj.LocalBound(i) < obj.GlobalBound()) {
        ++central_blocks;
        const double bc = OnePointSecondMomentBound(obj.GlobalBound(), obj.GlobalSigma(), di, delta);
        if (!(one.block_mean[i] + 3.0 * one.block_se[i] < bc)) ++central_bad;
        central_ratio = std::max(central_ratio, one.block_mean[i] / bc);
      }
    }
    if (two.total_mean > TwoPointAggregateBound(l0, s0, d) + 3.0 * two.total_se) ++agg_bad;
  }
  rep.checks.push_back({"one-point block second moments within (J^*^2 + s^2) d_i / delta^2",
                        one_bad == 0,
                        std::to_string(one_bad) + " of " + std::to_string(blocks) +
                            " blocks exceed; largest empirical/bound ratio " + Fmt(one_ratio)});
  rep.checks.push_back({"two-point block second moments within (L^^2 + s^2)(d_i d + 8 d_i + 16)",
                        two_bad == 0,
                        std::to_string(two_bad) + " of " + std::to_string(blocks) +
                            " blocks exceed; largest empirical/bound ratio " + Fmt(two_ratio)});
  rep.checks.push_back({"two-point total second moment within (L_0^2 + s_0^2)(d + 4)^2", agg_bad == 0,
                        std::to_string(agg_bad) + " of " + std::to_string(instances) + " instances exceed"});
  rep.checks.push_back({"distributed one-point moment strictly below the centralized bound",
                        central_bad == 0 && central_blocks > 0,
                        std::to_string(central_bad) + " of " + std::to_string(central_blocks) +
                            " eligible blocks fail; largest ratio " + Fmt(central_ratio)});
  rep.seconds = timer.Seconds();
  return rep;
}

SuiteReport ScopeVarianceSuite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport rep;
  rep.suite = "scope_variance";
  Rng rng = DeriveRng(opts.seed, {51});
  const std::size_t instances = Scaled(5, opts.scale, 1);
  const std::size_t samples = Scaled(100000, opts.scale, 10000);
  const double delta = 0.5;
  std::size_t order_bad = 0, ordered_blocks = 0, equal_bad = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  std::vector<double> z_means;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    const int n = std::uniform_int_distribution<int>(6, 9)(rng);
    const auto graph = RandomGraph(n, 0.03, rng, true);
    // Every quadratic term is non-positive, so local and remaining values
    // share a sign and the centralized moment dominates blockwise.
    const SyntheticObjective obj = MakeSynthetic(graph, rng, {SyntheticFamily::kQuadratic, 1, 2, 0.1});
    const auto theta = Gaussian(obj.total_dim(), rng);
    const auto& dims = obj.block_dims();
    const auto& reach = obj.graph().reach;
    MomentAccumulator diff_sq(n), diff_mean(obj.total_dim());
    std::vector<double> dsq(n), dm(obj.total_dim());
    Rng r = DeriveRng(rng(), {1});
    for (std::size_t m = 0; m < samples; ++m) {
      const auto u = SamplePerturbation(dims, r);
      const auto xi = obj.DrawNoise(r);
      std::vector<double> x(theta.size());
      for (std::size_t k = 0; k < x.size(); ++k) x[k] = theta[k] + delta * u[k];
      const auto w = obj.Observe(x, xi);
      const auto local = LocalValueSums(reach, w);
      const double global = CentralizedValue(w, n);
      for (AgentId i = 0; i < n; ++i) {
        double un = 0.0;
        for (std::size_t c = 0; c < dims[i]; ++c) {
          const double ui = u[obj.block_offset(i) + c];
          un += ui * ui;
          dm[obj.block_offset(i) + c] = (global - local[i]) * ui / delta;
        }
        dsq[i] = (global * global - local[i] * local[i]) * un / (delta * delta);
      }
      diff_sq.Add(dsq);
      diff_mean.Add(dm);
    }
    const auto e = diff_sq.Result();
    const auto em = diff_mean.Result();
    for (AgentId i = 0; i < n; ++i) {
      if (reach.reach_closed[i].size() == static_cast<std::size_t>(n)) {
        if (e.mean[i] != 0.0) ++equal_bad;
        continue;
      }
      ++ordered_blocks;
      const double margin = (e.mean[i] - 3.0 * e.std_error[i]) / e.mean[i];
      worst_margin = std::min(worst_margin, margin);
      if (!(e.mean[i] - 3.0 * e.std_error[i] > 0.0)) ++order_bad;
      for (std::size_t c = 0; c < dims[i]; ++c) {
        const std::size_t k = obj.block_offset(i) + c;
        z_means.push_back(em.mean[k] / em.std_error[k]);
      }
    }
  }
  rep.checks.push_back({"distributed block second moment below centralized (paired, 3 sigma)",
                        order_bad == 0 && ordered_blocks > 0,
                        std::to_string(order_bad) + " of " + std::to_string(ordered_blocks) +
                            " blocks fail; smallest relative margin " + Fmt(worst_margin)});
  rep.checks.push_back({"agents reaching every agent see identical moments", equal_bad == 0,
                        std::to_string(equal_bad) + " mismatches"});
  AddZChecks(rep, "distributed and centralized one-point means agree", z_means);
  rep.seconds = timer.Seconds();
  return rep;
}

SuiteReport SmoothingGapSuite(const SuiteOptions& opts) {
  Timer timer;
  SuiteReport rep;
  rep.suite = "smoothing_gap";
  Rng rng = DeriveRng(opts.seed, {61});
  const std::size_t samples = Scaled(1000000, opts.scale, 1000);
  const std::size_t d = 5;
  const double delta = 0.1;
  std::vector<std::vector<double>> thetas{std::vector<double>(d, 0.0)};
  for (int k = 0; k < 4; ++k) {
    auto t = Gaussian(d, rng);
    for (double& v : t) v *= 0.1;
    thetas.push_back(t);
  }
  const ScalarField l1 = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
  };
  const double lip = std::sqrt(static_cast<double>(d));
  const auto gap = CheckSmoothingGap(l1, lip, delta, thetas, samples, rng);
  rep.checks.push_back({"l1 smoothing gap within delta sqrt(d) L", gap.worst_gap <= gap.bound + 3.0 * gap.worst_gap_se,
                        "worst gap " + Fmt(gap.worst_gap) + " vs bound " + Fmt(gap.bound)});
  std::vector<double> c = Gaussian(d, rng);
  const ScalarField linear = [&](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += c[k] * x[k];
    return s;
  };
  const auto lin = CheckSmoothingGap(linear, 1.0, delta, thetas, samples, rng);
  bool ok = true;
  for (std::size_t k = 0; k < lin.gaps.size(); ++k)
    if (lin.gaps[k] > 3.0 * lin.std_errors[k]) ok = false;
  rep.checks.push_back({"linear functions are unchanged by smoothing", ok,
                        "worst gap " + Fmt(lin.worst_gap) + " with standard error " + Fmt(lin.worst_gap_se)});
  rep.seconds = timer.Seconds();
  return rep;
}

std::vector<std::string> SuiteNames() {
  return {"graph", "lemma1", "unbiasedness", "bounds", "scope_variance", "smoothing_gap"};
}

SuiteReport RunSuite(const std::string& name, const SuiteOptions& opts) {
  if (name == "graph") return GraphSuite(opts);
  if (name == "lemma1") return Lemma1Suite(opts);
  if (name == "unbiasedness") return UnbiasednessSuite(opts);
  if (name == "bounds") return BoundsSuite(opts);
  if (name == "scope_variance") return ScopeVarianceSuite(opts);
  if (name == "smoothing_gap") return SmoothingGapSuite(opts);
  throw std::invalid_argument("unknown validation suite '" + name + "'");
}

std::vector<std::vector<bool>> TransitiveClosure(const CoordinationGraph& g) {
  const int n = g.num_agents();
  std::vector<std::vector<bool>> r(n, std::vector<bool>(n, false));
  for (const Edge& e : g.edges()) r[e.from][e.to] = true;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      if (r[i][k])
        for (int j = 0; j < n; ++j)
          if (r[k][j]) r[i][j] = true;
  return r;
}

}  // namespace dmarl::validation
