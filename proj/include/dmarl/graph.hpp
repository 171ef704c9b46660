#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dmarl {

/// Agent indices are 0-based inside the library. Everything that crosses an
/// I/O boundary (config files, CLI output, CSV headers, Python) is 1-based.
using AgentId = int;

struct Edge {
  AgentId from;
  AgentId to;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Directed, unweighted coordination graph. Edge (j, i) means agent j's state
/// and action influence agent i's transition and observation.
///
/// Immutable after construction. Edges are kept sorted, adjacency lists are
/// sorted ascending.
class CoordinationGraph {
 public:
  /// Validates and normalizes a 0-based edge list. Throws GraphError naming the
  /// offending edge (1-based) on out-of-range indices, self-loops or duplicates.
  static CoordinationGraph FromEdges(int num_agents, std::vector<Edge> edges);

  /// Same as FromEdges but takes 1-based pairs, as they appear in files.
  static CoordinationGraph FromOneBased(int num_agents,
                                       const std::vector<std::pair<int, int>>& edges);

  int num_agents() const { return num_agents_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t num_edges() const { return edges_.size(); }

  const std::vector<AgentId>& out_neighbors(AgentId i) const { return out_[i]; }
  const std::vector<AgentId>& in_neighbors(AgentId i) const { return in_[i]; }

  /// I_i = in-neighbors plus i itself, sorted. These are the agents whose
  /// stocks agent i observes.
  std::vector<AgentId> observed_agents(AgentId i) const;

  bool has_edge(AgentId from, AgentId to) const;

 private:
  CoordinationGraph() = default;

  int num_agents_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<AgentId>> out_;
  std::vector<std::vector<AgentId>> in_;
};

/// Maximal strongly connected components, ordered by smallest member.
struct ClusterDecomposition {
  std::vector<std::vector<AgentId>> clusters;  // each sorted ascending
  std::vector<int> cluster_of;                 // agent -> cluster index

  std::size_t size() const { return clusters.size(); }
};

/// Reachability in the coordination graph.
///   reach[i]         N_i^L : agents reachable from i by a non-empty path
///   reach_closed[i]  I_i^L : reach[i] plus i
///   ancestors[i]     N_i^{L-} : agents that reach i by a non-empty path
/// All sets sorted ascending. i is in reach[i] only when i lies on a cycle.
struct ReachabilitySets {
  std::vector<std::vector<AgentId>> reach;
  std::vector<std::vector<AgentId>> reach_closed;
  std::vector<std::vector<AgentId>> ancestors;
};

/// Communication graph required for learning. Edge (j, i) means j sends its
/// return to i, which happens exactly when i reaches j in the coordination
/// graph. Self-pairs are never materialized: an agent does not message itself.
struct LearningGraph {
  int num_agents = 0;
  std::vector<Edge> edges;                           // sorted
  std::vector<std::vector<AgentId>> in_neighbors;    // senders to i, sorted

  bool has_edge(AgentId from, AgentId to) const;
};

/// Cluster-level DAG: vertex c is clusters[c]; edge (a, b) iff some
/// coordination edge runs from a member of a to a member of b, a != b.
struct ClusterDag {
  int num_clusters = 0;
  std::vector<Edge> edges;  // sorted, cluster indices
  std::vector<std::vector<int>> successors;
};

ClusterDecomposition StronglyConnectedComponents(const CoordinationGraph& g);

/// Computed from the condensation: cluster-level reachability is resolved once
/// in reverse topological order and then expanded to agents.
ReachabilitySets Reachability(const CoordinationGraph& g);
ReachabilitySets Reachability(const CoordinationGraph& g, const ClusterDecomposition& d);

LearningGraph DeriveLearningGraph(const CoordinationGraph& g, const ReachabilitySets& r);

ClusterDag ClusterCondensation(const ClusterDecomposition& d, const CoordinationGraph& g);

/// True when the cluster DAG has no directed cycle (Kahn's algorithm).
bool IsAcyclic(const ClusterDag& dag);

/// Weakly connected components, each sorted, ordered by smallest member.
std::vector<std::vector<AgentId>> WeakComponents(const CoordinationGraph& g);

/// Everything derived from one coordination graph, computed once.
struct GraphArtifacts {
  CoordinationGraph graph;
  ClusterDecomposition clusters;
  ReachabilitySets reach;
  LearningGraph learning;
  ClusterDag dag;

  explicit GraphArtifacts(CoordinationGraph g);
};

/// Human-readable dump of clusters, reachability sets and E_L (1-based).
std::string DescribeGraph(const GraphArtifacts& a);

}  // namespace dmarl
