#ifndef NIFFLOW_NETWORK_SCIENCE_HPP
#define NIFFLOW_NETWORK_SCIENCE_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace nifflow {

struct NifGraph;

/// Plain weighted graph used by the centrality and community routines.
struct WeightedGraph {
  struct Edge {
    std::size_t from = 0;
    std::size_t to = 0;
    double weight = 1.0;
  };

  std::size_t node_count = 0;
  bool directed = false;
  std::vector<Edge> edges;

  void add_edge(std::size_t from, std::size_t to, double weight = 1.0);
};

/// Directed view of a NIF graph weighted by each edge's normalized flow.
WeightedGraph to_weighted_graph(const NifGraph& graph);

enum class EdgeLength {
  inverse_weight,  // length 1 / w; edges with w <= 0 cannot be traversed
  unit,
};

EdgeLength parse_edge_length(std::string_view name);
std::string_view to_string(EdgeLength mode) noexcept;

using CentralityScores = std::vector<double>;

/// Betweenness B(v) = sum over pairs s != t != v of sigma_st(v) / sigma_st,
/// by Brandes accumulation. Ordered pairs for directed graphs, unordered for
/// undirected ones.
CentralityScores betweenness(const WeightedGraph& graph, EdgeLength mode);

struct CommunityAssignment {
  std::vector<std::size_t> community;  // ids contiguous from 0
  double modularity = 0.0;
  double gamma = 1.0;

  std::size_t count() const;
};

/// Modularity with the resolution applied as a divisor of the null model:
///
///   Q = 1/(2m) sum_ij [A_ij - (1/gamma) k_i k_j / (2m)] delta(g_i, g_j)
///
/// Directed graphs are symmetrized (A = W + W^T). A self-loop of weight w
/// contributes 2w to A_ii. An edgeless graph has Q = 0.
double modularity(const WeightedGraph& graph, std::span<const std::size_t> assignment, double gamma);

/// Louvain-style local moving plus aggregation maximizing the modularity
/// above. Node visiting order is shuffled from `seed`; among improving moves
/// the largest gain wins, ties going to the lowest community id.
CommunityAssignment detect_communities(const WeightedGraph& graph, double gamma, std::uint64_t seed);

}  // namespace nifflow

#endif  // NIFFLOW_NETWORK_SCIENCE_HPP
