#include "dmarl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dmarl {

namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> Words(const std::string& s) {
  std::vector<std::string> out;
  std::string w;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == ',') {
      if (!w.empty()) out.push_back(std::move(w));
      w.clear();
    } else {
      w += c;
    }
  }
  if (!w.empty()) out.push_back(std::move(w));
  return out;
}

[[noreturn]] void Fail(const std::string& source, int line, const std::string& msg) {
  throw ConfigError(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + msg);
}

double ToDouble(const std::string& s, const std::string& source, int line, const std::string& key) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    Fail(source, line, "'" + key + "' expects a finite number, got '" + s + "'");
  return v;
}

long long ToInt(const std::string& s, const std::string& source, int line, const std::string& key) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    Fail(source, line, "'" + key + "' expects an integer, got '" + s + "'");
  return v;
}

std::uint64_t ToU64(const std::string& s, const std::string& source, int line, const std::string& key) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    Fail(source, line, "'" + key + "' expects a non-negative integer, got '" + s + "'");
  return v;
}

bool ToBool(const std::string& s, const std::string& source, int line, const std::string& key) {
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  Fail(source, line, "'" + key + "' expects true or false, got '" + s + "'");
}

std::string Num(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// Edges and agent count from entries of one section.
CoordinationGraph GraphFromEntries(const std::vector<ConfigEntry>& entries,
                                   const std::string& source) {
  std::optional<int> n;
  int n_line = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> edge_lines;
  for (const auto& e : entries) {
    if (e.key == "num_agents") {
      if (n) Fail(source, e.line, "'num_agents' given twice");
      const long long v = ToInt(e.value, source, e.line, e.key);
      if (v < 1) Fail(source, e.line, "'num_agents' must be at least 1");
      n = static_cast<int>(v);
      n_line = e.line;
    } else if (e.key == "edge") {
      const auto w = Words(e.value);
      if (w.size() != 2) Fail(source, e.line, "'edge' expects two agent indices");
      edges.emplace_back(static_cast<int>(ToInt(w[0], source, e.line, e.key)),
                         static_cast<int>(ToInt(w[1], source, e.line, e.key)));
      edge_lines.push_back(e.line);
    } else {
      Fail(source, e.line, "unknown graph key '" + e.key + "'");
    }
  }
  if (!n) Fail(source, 0, "missing required field 'num_agents'");
  try {
    return CoordinationGraph::FromOneBased(*n, edges);
  } catch (const GraphError& err) {
    Fail(source, n_line, err.what());
  }
}

std::vector<double> PerAgent(const ConfigEntry& e, int n, const std::string& source) {
  const auto w = Words(e.value);
  std::vector<double> v;
  for (const auto& s : w) v.push_back(ToDouble(s, source, e.line, e.key));
  if (v.size() == 1) return std::vector<double>(n, v.front());
  if (static_cast<int>(v.size()) != n)
    Fail(source, e.line, "'" + e.key + "' expects 1 or " + std::to_string(n) + " values, got " +
                             std::to_string(v.size()));
  return v;
}

Range ToRange(const ConfigEntry& e, const std::string& source) {
  const auto w = Words(e.value);
  if (w.size() != 2) Fail(source, e.line, "'" + e.key + "' expects two numbers: low high");
  Range r{ToDouble(w[0], source, e.line, e.key), ToDouble(w[1], source, e.line, e.key)};
  if (!(r.first < r.second)) Fail(source, e.line, "'" + e.key + "' needs low < high");
  return r;
}

}  // namespace

std::vector<ConfigEntry> ParseKeyValueText(const std::string& text, const std::string& source) {
  std::vector<ConfigEntry> out;
  std::istringstream is(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto cut = raw.find_first_of("#;");
    const std::string s = Trim(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) Fail(source, line, "malformed section header '" + s + "'");
      section = Trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) Fail(source, line, "expected 'key = value', got '" + s + "'");
    ConfigEntry e{section, Trim(s.substr(0, eq)), Trim(s.substr(eq + 1)), line};
    if (e.key.empty()) Fail(source, line, "empty key");
    if (e.value.empty()) Fail(source, line, "'" + e.key + "' has no value");
    out.push_back(std::move(e));
  }
  return out;
}

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CoordinationGraph ParseGraphText(const std::string& text, const std::string& source) {
  auto entries = ParseKeyValueText(text, source);
  for (const auto& e : entries)
    if (!e.section.empty() && e.section != "graph")
      Fail(source, e.line, "unexpected section [" + e.section + "] in a graph file");
  return GraphFromEntries(entries, source);
}

CoordinationGraph LoadGraphFile(const std::filesystem::path& path) {
  return ParseGraphText(ReadTextFile(path), path.string());
}

std::string Algorithm::Name() const { return ToString(scope) + "_" + ToString(flavor); }

Algorithm ParseAlgorithm(const std::string& name) {
  const auto us = name.find('_');
  if (us == std::string::npos) throw ConfigError("unknown algorithm '" + name + "'");
  try {
    return {ParseOracleFlavor(name.substr(us + 1)), ParseOracleScope(name.substr(0, us))};
  } catch (const OracleError&) {
    throw ConfigError("unknown algorithm '" + name +
                      "' (expected <distributed|centralized>_<one_point|two_point|residual>)");
  }
}

LearnerConfig ExperimentConfig::Learner(const Algorithm& a) const {
  LearnerConfig lc;
  lc.step_size = step_size;
  lc.num_epochs = epochs;
  lc.oracle.delta = delta;
  lc.oracle.flavor = a.flavor;
  lc.oracle.scope = a.scope;
  lc.horizon = horizon;
  lc.discount = discount;
  lc.bus_mode = bus_mode;
  return lc;
}

std::uint64_t ExperimentConfig::RepeatSeed(int r) const {
  if (!repeat_seeds.empty()) return repeat_seeds.at(r);
  return DeriveRng(master_seed, {0x5EED, static_cast<std::uint64_t>(r)})();
}

void ExperimentConfig::Validate() const {
  env.Validate();
  DescribeEnvironment(env, horizon, discount);
  if (epochs < 1) throw ConfigError("learner.epochs must be at least 1");
  if (!(step_size >= 0.0)) throw ConfigError("learner.step_size must be non-negative");
  if (!(delta > 0.0)) throw ConfigError("learner.delta must be positive");
  if (policy.num_centers < 1) throw ConfigError("policy.num_centers must be at least 1");
  if (algorithms.empty()) throw ConfigError("experiment.algorithms must list at least one algorithm");
  if (repeats < 1) throw ConfigError("experiment.repeats must be at least 1");
  if (!repeat_seeds.empty() && static_cast<int>(repeat_seeds.size()) != repeats)
    throw ConfigError("experiment.repeat_seeds must list exactly one seed per repeat");
  if (checkpoint_interval < 0) throw ConfigError("experiment.checkpoint_interval must be >= 0");
  if (jobs < 0) throw ConfigError("experiment.jobs must be >= 0");
}

ExperimentConfig ParseConfig(const std::string& text, const std::filesystem::path& base_dir,
                             const std::string& source) {
  const auto entries = ParseKeyValueText(text, source);
  std::map<std::string, std::vector<ConfigEntry>> by_section;
  for (const auto& e : entries) {
    static const std::set<std::string> known{"graph", "environment", "policy", "learner", "experiment"};
    if (!known.count(e.section))
      Fail(source, e.line, e.section.empty() ? "key '" + e.key + "' outside any section"
                                             : "unknown section [" + e.section + "]");
    by_section[e.section].push_back(e);
  }

  // Graph: either embedded or `file = path`.
  std::string graph_file;
  std::optional<CoordinationGraph> graph;
  {
    std::vector<ConfigEntry> inline_entries;
    for (const auto& e : by_section["graph"]) {
      if (e.key == "file") {
        if (!graph_file.empty()) Fail(source, e.line, "'file' given twice");
        graph_file = e.value;
      } else {
        inline_entries.push_back(e);
      }
    }
    if (!graph_file.empty() && !inline_entries.empty())
      Fail(source, inline_entries.front().line, "graph is both embedded and given by 'file'");
    if (!graph_file.empty()) {
      std::filesystem::path p(graph_file);
      if (p.is_relative()) p = base_dir / p;
      graph = LoadGraphFile(p);
    } else if (!inline_entries.empty()) {
      graph = GraphFromEntries(inline_entries, source);
    } else {
      Fail(source, 0, "missing required field 'graph.file' (or embedded 'graph.num_agents')");
    }
  }
  const int n = graph->num_agents();

  ExperimentConfig cfg{WarehouseConfig(*graph)};
  cfg.graph_file = graph_file;
  std::set<std::string> seen;
  auto once = [&](const ConfigEntry& e) {
    if (!seen.insert(e.section + "." + e.key).second)
      Fail(source, e.line, "'" + e.section + "." + e.key + "' given twice");
  };
  auto unknown = [&](const ConfigEntry& e) {
    Fail(source, e.line, "unknown key '" + e.key + "' in [" + e.section + "]");
  };

  for (const auto& e : by_section["environment"]) {
    once(e);
    if (e.key == "initial_stock") cfg.env.initial_stock = PerAgent(e, n, source);
    else if (e.key == "demand_amplitude") cfg.env.demand_amplitude = PerAgent(e, n, source);
    else if (e.key == "initial_jitter") cfg.env.initial_jitter = ToDouble(e.value, source, e.line, e.key);
    else if (e.key == "demand_noise_std") cfg.env.demand_noise_std = ToDouble(e.value, source, e.line, e.key);
    else if (e.key == "clip_noise") cfg.env.clip_noise = ToBool(e.value, source, e.line, e.key);
    else if (e.key == "shared_noise") cfg.env.shared_noise = ToBool(e.value, source, e.line, e.key);
    else if (e.key == "fixed_initial_state") cfg.env.fixed_initial_state = ToBool(e.value, source, e.line, e.key);
    else unknown(e);
  }
  for (const auto& e : by_section["policy"]) {
    once(e);
    if (e.key == "num_centers") cfg.policy.num_centers = static_cast<int>(ToInt(e.value, source, e.line, e.key));
    else if (e.key == "stock_range") cfg.policy.stock_range = ToRange(e, source);
    else if (e.key == "demand_range") cfg.policy.demand_range = ToRange(e, source);
    else if (e.key == "feature") {
      try {
        cfg.policy.feature = ParseFeatureKind(e.value);
      } catch (const PolicyError& err) {
        Fail(source, e.line, err.what());
      }
    } else unknown(e);
  }
  for (const auto& e : by_section["learner"]) {
    once(e);
    if (e.key == "epochs") cfg.epochs = static_cast<int>(ToInt(e.value, source, e.line, e.key));
    else if (e.key == "horizon") cfg.horizon = static_cast<int>(ToInt(e.value, source, e.line, e.key));
    else if (e.key == "discount") cfg.discount = ToDouble(e.value, source, e.line, e.key);
    else if (e.key == "delta") cfg.delta = ToDouble(e.value, source, e.line, e.key);
    else if (e.key == "step_size") cfg.step_size = ToDouble(e.value, source, e.line, e.key);
    else if (e.key == "bus_mode") {
      if (e.value == "direct") cfg.bus_mode = MessageBus::Mode::kDirect;
      else if (e.value == "coordinator") cfg.bus_mode = MessageBus::Mode::kCoordinator;
      else Fail(source, e.line, "'bus_mode' expects direct or coordinator");
    } else unknown(e);
  }
  for (const auto& e : by_section["experiment"]) {
    once(e);
    if (e.key == "algorithms") {
      for (const auto& w : Words(e.value)) {
        Algorithm a;
        try {
          a = ParseAlgorithm(w);
        } catch (const ConfigError& err) {
          Fail(source, e.line, err.what());
        }
        if (std::find(cfg.algorithms.begin(), cfg.algorithms.end(), a) != cfg.algorithms.end())
          Fail(source, e.line, "algorithm '" + w + "' listed twice");
        cfg.algorithms.push_back(a);
      }
    } else if (e.key == "repeats") cfg.repeats = static_cast<int>(ToInt(e.value, source, e.line, e.key));
    else if (e.key == "master_seed") cfg.master_seed = ToU64(e.value, source, e.line, e.key);
    else if (e.key == "repeat_seeds") {
      for (const auto& w : Words(e.value)) cfg.repeat_seeds.push_back(ToU64(w, source, e.line, e.key));
    } else if (e.key == "output_dir") cfg.output_dir = e.value;
    else if (e.key == "checkpoint_interval") cfg.checkpoint_interval = static_cast<int>(ToInt(e.value, source, e.line, e.key));
    else if (e.key == "jobs") cfg.jobs = static_cast<int>(ToInt(e.value, source, e.line, e.key));
    else if (e.key == "timing") cfg.timing = ToBool(e.value, source, e.line, e.key);
    else unknown(e);
  }

  for (const char* req : {"learner.epochs", "learner.horizon", "experiment.algorithms", "experiment.repeats"})
    if (!seen.count(req)) Fail(source, 0, std::string("missing required field '") + req + "'");

  try {
    cfg.Validate();
  } catch (const ContractViolation& err) {
    Fail(source, 0, err.what());
  } catch (const ConfigError& err) {
    Fail(source, 0, err.what());
  }
  return cfg;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  return ParseConfig(ReadTextFile(path), path.parent_path(), path.string());
}

std::string EchoConfig(const ExperimentConfig& cfg) {
  std::ostringstream os;
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + Num(v[i]);
    return s;
  };
  auto boolean = [](bool b) { return b ? "true" : "false"; };
  os << "[graph]\n";
  if (!cfg.graph_file.empty()) os << "# loaded from " << cfg.graph_file << "\n";
  os << "num_agents = " << cfg.graph().num_agents() << "\n";
  for (const Edge& e : cfg.graph().edges()) os << "edge = " << e.from + 1 << " " << e.to + 1 << "\n";
  os << "\n[environment]\n"
     << "initial_stock = " << list(cfg.env.initial_stock) << "\n"
     << "demand_amplitude = " << list(cfg.env.demand_amplitude) << "\n"
     << "initial_jitter = " << Num(cfg.env.initial_jitter) << "\n"
     << "demand_noise_std = " << Num(cfg.env.demand_noise_std) << "\n"
     << "clip_noise = " << boolean(cfg.env.clip_noise) << "\n"
     << "shared_noise = " << boolean(cfg.env.shared_noise) << "\n"
     << "fixed_initial_state = " << boolean(cfg.env.fixed_initial_state) << "\n";
  os << "\n[policy]\n"
     << "num_centers = " << cfg.policy.num_centers << "\n"
     << "stock_range = " << Num(cfg.policy.stock_range.first) << " " << Num(cfg.policy.stock_range.second) << "\n"
     << "demand_range = " << Num(cfg.policy.demand_range.first) << " " << Num(cfg.policy.demand_range.second) << "\n"
     << "feature = " << ToString(cfg.policy.feature) << "\n";
  os << "\n[learner]\n"
     << "epochs = " << cfg.epochs << "\n"
     << "horizon = " << cfg.horizon << "\n"
     << "discount = " << Num(cfg.discount) << "\n"
     << "delta = " << Num(cfg.delta) << "\n"
     << "step_size = " << Num(cfg.step_size) << "\n"
     << "bus_mode = " << (cfg.bus_mode == MessageBus::Mode::kDirect ? "direct" : "coordinator") << "\n";
  os << "\n[experiment]\nalgorithms =";
  for (const auto& a : cfg.algorithms) os << " " << a.Name();
  os << "\nrepeats = " << cfg.repeats << "\n"
     << "master_seed = " << cfg.master_seed << "\n";
  if (!cfg.repeat_seeds.empty()) {
    os << "repeat_seeds =";
    for (auto s : cfg.repeat_seeds) os << " " << s;
    os << "\n";
  }
  os << "output_dir = " << cfg.output_dir << "\n"
     << "checkpoint_interval = " << cfg.checkpoint_interval << "\n"
     << "jobs = " << cfg.jobs << "\n"
     << "timing = " << boolean(cfg.timing) << "\n";
  return os.str();
}

}  // namespace dmarl
