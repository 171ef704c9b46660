#include "dmarl/graph.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>

namespace dmarl {

namespace {

std::string OneBased(const Edge& e) {
  std::ostringstream os;
  os << "(" << e.from + 1 << "," << e.to + 1 << ")";
  return os.str();
}

// Minimal fixed-size bitset over cluster indices.
class BitRow {
 public:
  explicit BitRow(std::size_t n) : words_((n + 63) / 64, 0) {}
  void set(std::size_t i) { words_[i / 64] |= (std::uint64_t{1} << (i % 64)); }
  bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1U; }
  void merge(const BitRow& o) {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] |= o.words_[w];
  }

 private:
  std::vector<std::uint64_t> words_;
};

std::vector<int> TopologicalOrder(const ClusterDag& dag) {
  std::vector<int> indeg(dag.num_clusters, 0);
  for (const Edge& e : dag.edges) ++indeg[e.to];
  std::vector<int> ready;
  for (int c = dag.num_clusters - 1; c >= 0; --c)
    if (indeg[c] == 0) ready.push_back(c);
  std::vector<int> order;
  order.reserve(dag.num_clusters);
  while (!ready.empty()) {
    int c = ready.back();
    ready.pop_back();
    order.push_back(c);
    for (int s : dag.successors[c])
      if (--indeg[s] == 0) ready.push_back(s);
  }
  return order;
}

}  // namespace

CoordinationGraph CoordinationGraph::FromEdges(int num_agents, std::vector<Edge> edges) {
  if (num_agents < 1) throw GraphError("num_agents must be positive");
  for (const Edge& e : edges) {
    if (e.from < 0 || e.from >= num_agents || e.to < 0 || e.to >= num_agents)
      throw GraphError("edge " + OneBased(e) + " has an agent index outside 1.." +
                       std::to_string(num_agents));
    if (e.from == e.to) throw GraphError("edge " + OneBased(e) + " is a self-loop");
  }
  std::sort(edges.begin(), edges.end());
  auto dup = std::adjacent_find(edges.begin(), edges.end());
  if (dup != edges.end()) throw GraphError("edge " + OneBased(*dup) + " is listed twice");

  CoordinationGraph g;
  g.num_agents_ = num_agents;
  g.edges_ = std::move(edges);
  g.out_.resize(num_agents);
  g.in_.resize(num_agents);
  for (const Edge& e : g.edges_) {
    g.out_[e.from].push_back(e.to);
    g.in_[e.to].push_back(e.from);
  }
  for (auto& v : g.in_) std::sort(v.begin(), v.end());
  return g;
}

CoordinationGraph CoordinationGraph::FromOneBased(
    int num_agents, const std::vector<std::pair<int, int>>& edges) {
  std::vector<Edge> zero;
  zero.reserve(edges.size());
  for (auto [a, b] : edges) zero.push_back({a - 1, b - 1});
  return FromEdges(num_agents, std::move(zero));
}

std::vector<AgentId> CoordinationGraph::observed_agents(AgentId i) const {
  std::vector<AgentId> out = in_[i];
  out.insert(std::upper_bound(out.begin(), out.end(), i), i);
  return out;
}

bool CoordinationGraph::has_edge(AgentId from, AgentId to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

bool LearningGraph::has_edge(AgentId from, AgentId to) const {
  return std::binary_search(edges.begin(), edges.end(), Edge{from, to});
}

ClusterDecomposition StronglyConnectedComponents(const CoordinationGraph& g) {
  // Iterative Tarjan; recursion depth would otherwise be O(N).
  const int n = g.num_agents();
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<int> stack;
  std::vector<std::vector<AgentId>> comps;
  int counter = 0;

  struct Frame {
    int v;
    std::size_t next;
  };
  std::vector<Frame> call;

  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      Frame& f = call.back();
      const auto& succ = g.out_neighbors(f.v);
      if (f.next < succ.size()) {
        int w = succ[f.next++];
        if (index[w] == -1) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
        continue;
      }
      int v = f.v;
      call.pop_back();
      if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
      if (low[v] == index[v]) {
        std::vector<AgentId> comp;
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
      }
    }
  }

  std::sort(comps.begin(), comps.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  ClusterDecomposition d;
  d.cluster_of.assign(n, -1);
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (AgentId a : comps[c]) d.cluster_of[a] = static_cast<int>(c);
  d.clusters = std::move(comps);
  return d;
}

ClusterDag ClusterCondensation(const ClusterDecomposition& d, const CoordinationGraph& g) {
  ClusterDag dag;
  dag.num_clusters = static_cast<int>(d.size());
  for (const Edge& e : g.edges()) {
    int a = d.cluster_of[e.from], b = d.cluster_of[e.to];
    if (a != b) dag.edges.push_back({a, b});
  }
  std::sort(dag.edges.begin(), dag.edges.end());
  dag.edges.erase(std::unique(dag.edges.begin(), dag.edges.end()), dag.edges.end());
  dag.successors.resize(dag.num_clusters);
  for (const Edge& e : dag.edges) dag.successors[e.from].push_back(e.to);
  return dag;
}

bool IsAcyclic(const ClusterDag& dag) {
  return static_cast<int>(TopologicalOrder(dag).size()) == dag.num_clusters;
}

ReachabilitySets Reachability(const CoordinationGraph& g) {
  return Reachability(g, StronglyConnectedComponents(g));
}

ReachabilitySets Reachability(const CoordinationGraph& g, const ClusterDecomposition& d) {
  const int n = g.num_agents();
  const ClusterDag dag = ClusterCondensation(d, g);
  const std::size_t nc = d.size();

  // Strict cluster-level reachability, filled sinks first.
  std::vector<BitRow> creach(nc, BitRow(nc));
  std::vector<int> order = TopologicalOrder(dag);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int c = *it;
    for (int s : dag.successors[c]) {
      creach[c].set(s);
      creach[c].merge(creach[s]);
    }
  }

  // Agents of one cluster share the same set; build it once per cluster.
  std::vector<std::vector<AgentId>> cluster_targets(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    auto& t = cluster_targets[c];
    for (std::size_t o = 0; o < nc; ++o)
      if (creach[c].test(o)) t.insert(t.end(), d.clusters[o].begin(), d.clusters[o].end());
    if (d.clusters[c].size() >= 2)
      t.insert(t.end(), d.clusters[c].begin(), d.clusters[c].end());
    std::sort(t.begin(), t.end());
  }

  ReachabilitySets r;
  r.reach.resize(n);
  r.reach_closed.resize(n);
  r.ancestors.resize(n);
  for (AgentId i = 0; i < n; ++i) {
    const auto& t = cluster_targets[d.cluster_of[i]];
    r.reach[i] = t;
    auto& closed = r.reach_closed[i];
    closed = t;
    auto pos = std::lower_bound(closed.begin(), closed.end(), i);
    if (pos == closed.end() || *pos != i) closed.insert(pos, i);
  }
  for (AgentId i = 0; i < n; ++i)
    for (AgentId j : r.reach[i]) r.ancestors[j].push_back(i);
  return r;
}

LearningGraph DeriveLearningGraph(const CoordinationGraph& g, const ReachabilitySets& r) {
  LearningGraph l;
  l.num_agents = g.num_agents();
  l.in_neighbors.resize(l.num_agents);
  for (AgentId i = 0; i < l.num_agents; ++i)
    for (AgentId j : r.reach[i])
      if (j != i) {
        l.in_neighbors[i].push_back(j);
        l.edges.push_back({j, i});
      }
  std::sort(l.edges.begin(), l.edges.end());
  return l;
}

std::vector<std::vector<AgentId>> WeakComponents(const CoordinationGraph& g) {
  const int n = g.num_agents();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const Edge& e : g.edges()) {
    int a = find(e.from), b = find(e.to);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<std::vector<AgentId>> comps;
  std::vector<int> slot(n, -1);
  for (AgentId i = 0; i < n; ++i) {
    int root = find(i);
    if (slot[root] == -1) {
      slot[root] = static_cast<int>(comps.size());
      comps.emplace_back();
    }
    comps[slot[root]].push_back(i);
  }
  return comps;
}

GraphArtifacts::GraphArtifacts(CoordinationGraph g)
    : graph(std::move(g)),
      clusters(StronglyConnectedComponents(graph)),
      reach(Reachability(graph, clusters)),
      learning(DeriveLearningGraph(graph, reach)),
      dag(ClusterCondensation(clusters, graph)) {}

namespace {

void PrintSet(std::ostream& os, const std::vector<AgentId>& s) {
  os << "{";
  for (std::size_t k = 0; k < s.size(); ++k) os << (k ? "," : "") << s[k] + 1;
  os << "}";
}

}  // namespace

std::string DescribeGraph(const GraphArtifacts& a) {
  std::ostringstream os;
  const int n = a.graph.num_agents();
  os << "agents: " << n << "\n";
  os << "coordination edges: " << a.graph.num_edges() << "\n";
  auto weak = WeakComponents(a.graph);
  os << "weakly connected components: " << weak.size() << "\n";
  os << "clusters: " << a.clusters.size() << "\n";
  for (std::size_t c = 0; c < a.clusters.size(); ++c) {
    os << "  V_" << c + 1 << " = ";
    PrintSet(os, a.clusters.clusters[c]);
    os << "\n";
  }
  os << "cluster edges:";
  for (const Edge& e : a.dag.edges) os << " (V_" << e.from + 1 << ",V_" << e.to + 1 << ")";
  os << "\n";
  os << "reachability:\n";
  for (AgentId i = 0; i < n; ++i) {
    os << "  agent " << i + 1 << ": N^L = ";
    PrintSet(os, a.reach.reach[i]);
    os << "  I^L = ";
    PrintSet(os, a.reach.reach_closed[i]);
    os << "\n";
  }
  os << "learning edges: " << a.learning.edges.size() << "\n ";
  for (const Edge& e : a.learning.edges) os << " " << OneBased(e);
  os << "\n";
  return os.str();
}

}  // namespace dmarl
