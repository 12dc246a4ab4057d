// Brute-force reference computations shared by the unit and acceptance
// tests. Each one is deliberately naive: exhaustive enumeration over paths,
// partitions or matrix entries, with no code shared with the library.
#ifndef NIFFLOW_TESTS_ORACLES_HPP
#define NIFFLOW_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "nifflow/network_science.hpp"
#include "nifflow/nif_graph.hpp"

namespace oracles {

using nifflow::EdgeLength;
using nifflow::Matrix;
using nifflow::NifEdge;
using nifflow::NifGraph;
using nifflow::WeightedGraph;

// Betweenness by enumerating every simple path between every pair.
inline std::vector<double> path_enumeration_betweenness(const WeightedGraph& g, EdgeLength mode) {
  const std::size_t n = g.node_count;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (const auto& e : g.edges) {
    if (mode == EdgeLength::inverse_weight && e.weight <= 0.0) continue;
    const double len = mode == EdgeLength::unit ? 1.0 : 1.0 / e.weight;
    adj[e.from].push_back({e.to, len});
    if (!g.directed) adj[e.to].push_back({e.from, len});
  }
  std::vector<double> score(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      if (s == t || (!g.directed && t < s)) continue;
      std::vector<std::pair<double, std::vector<std::size_t>>> paths;
      std::vector<std::size_t> stack{s};
      std::vector<char> on_path(n, 0);
      on_path[s] = 1;
      std::function<void(std::size_t, double)> walk = [&](std::size_t u, double length) {
        if (u == t) {
          paths.push_back({length, stack});
          return;
        }
        for (const auto& [v, len] : adj[u]) {
          if (on_path[v]) continue;
          on_path[v] = 1;
          stack.push_back(v);
          walk(v, length + len);
          stack.pop_back();
          on_path[v] = 0;
        }
      };
      walk(s, 0.0);
      if (paths.empty()) continue;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : paths) best = std::min(best, p.first);
      std::vector<const std::vector<std::size_t>*> shortest;
      for (const auto& p : paths) {
        if (p.first <= best * (1.0 + 1e-12)) shortest.push_back(&p.second);
      }
      for (const auto* p : shortest) {
        for (std::size_t i = 1; i + 1 < p->size(); ++i) score[(*p)[i]] += 1.0 / static_cast<double>(shortest.size());
      }
    }
  }
  return score;
}

// Modularity straight from the symmetrized adjacency matrix.
inline double modularity_oracle(const WeightedGraph& g, const std::vector<std::size_t>& c, double gamma) {
  const std::size_t n = g.node_count;
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  for (const auto& e : g.edges) {
    a[e.from][e.to] += e.weight;
    a[e.to][e.from] += e.weight;
  }
  std::vector<double> k(n, 0.0);
  double two_m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) k[i] += a[i][j];
    two_m += k[i];
  }
  if (two_m == 0.0) return 0.0;
  double q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (c[i] == c[j]) q += a[i][j] - (1.0 / gamma) * k[i] * k[j] / two_m;
    }
  }
  return q / two_m;
}

// All set partitions of n nodes as restricted growth strings.
inline void for_each_partition(std::size_t n, const std::function<void(const std::vector<std::size_t>&)>& visit) {
  std::vector<std::size_t> labels(n, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t used) {
    if (i == n) {
      visit(labels);
      return;
    }
    for (std::size_t c = 0; c <= used && c < n; ++c) {
      labels[i] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  rec(0, 0);
}

// Explicit enumeration of every input-to-output path,
// accumulating the product of (clamped) link weights.
inline Matrix enumerate_paths(const NifGraph& g, bool clamp) {
  std::map<std::size_t, std::vector<const NifEdge*>> out_edges;
  for (const NifEdge& e : g.edges) out_edges[e.src].push_back(&e);
  const std::size_t last = g.layer_count() - 1;
  Matrix a(g.layer_sizes.front(), g.layer_sizes.back());
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t origin, std::size_t node, double product) {
    if (g.nodes[node].layer == last) {
      a(origin, g.nodes[node].unit) += product;
      return;
    }
    for (const NifEdge* e : out_edges[node]) walk(origin, e->dst, product * (clamp ? e->clamped() : e->weight_raw));
  };
  for (std::size_t i = 0; i < g.layer_sizes.front(); ++i) walk(i, g.node_id(0, i), 1.0);
  return a;
}

}  // namespace oracles

#endif  // NIFFLOW_TESTS_ORACLES_HPP
