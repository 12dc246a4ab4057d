#include "nifflow/network_science.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <random>

#include <fmt/format.h>

#include "nifflow/error.hpp"
#include "nifflow/nif_graph.hpp"
#include "nifflow/parallel.hpp"

namespace nifflow {

void WeightedGraph::add_edge(std::size_t from, std::size_t to, double weight) {
  if (from >= node_count || to >= node_count) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("edge ({}, {}) outside a {}-node graph", from, to, node_count));
  }
  if (!(weight >= 0.0) || !std::isfinite(weight)) {
    throw Error(ErrorKind::invalid_argument, fmt::format("edge ({}, {}) has invalid weight", from, to));
  }
  edges.push_back(Edge{from, to, weight});
}

WeightedGraph to_weighted_graph(const NifGraph& graph) {
  WeightedGraph out;
  out.node_count = graph.nodes.size();
  out.directed = true;
  for (const NifEdge& e : graph.edges) out.add_edge(e.src, e.dst, e.weight_norm);
  return out;
}

EdgeLength parse_edge_length(std::string_view name) {
  if (name == "inverse" || name == "inverse_weight") return EdgeLength::inverse_weight;
  if (name == "unit") return EdgeLength::unit;
  throw Error(ErrorKind::invalid_argument, fmt::format("unknown edge length mode '{}'", name));
}

std::string_view to_string(EdgeLength mode) noexcept {
  return mode == EdgeLength::unit ? "unit" : "inverse";
}

// ---------------------------------------------------------------------------
// betweenness

namespace {

struct Arc {
  std::size_t to;
  double length;
};

std::vector<std::vector<Arc>> traversal_arcs(const WeightedGraph& graph, EdgeLength mode) {
  std::vector<std::vector<Arc>> arcs(graph.node_count);
  for (const auto& e : graph.edges) {
    double length = 1.0;
    if (mode == EdgeLength::inverse_weight) {
      if (e.weight <= 0.0) continue;
      length = 1.0 / e.weight;
    }
    arcs[e.from].push_back(Arc{e.to, length});
    if (!graph.directed && e.from != e.to) arcs[e.to].push_back(Arc{e.from, length});
  }
  return arcs;
}

bool same_length(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

/// Dependency of `source` on every node (Brandes single-source stage).
std::vector<double> source_dependency(const std::vector<std::vector<Arc>>& arcs, std::size_t source) {
  const std::size_t n = arcs.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, inf);
  std::vector<double> sigma(n, 0.0);
  std::vector<std::vector<std::size_t>> preds(n);
  std::vector<char> settled(n, 0);
  std::vector<std::size_t> order;
  order.reserve(n);

  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  sigma[source] = 1.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (settled[v] || d > dist[v]) continue;
    settled[v] = 1;
    order.push_back(v);
    for (const Arc& arc : arcs[v]) {
      const std::size_t w = arc.to;
      if (settled[w]) continue;
      const double candidate = dist[v] + arc.length;
      if (dist[w] == inf || (candidate < dist[w] && !same_length(candidate, dist[w]))) {
        dist[w] = candidate;
        sigma[w] = sigma[v];
        preds[w].assign(1, v);
        queue.emplace(candidate, w);
      } else if (same_length(candidate, dist[w])) {
        sigma[w] += sigma[v];
        preds[w].push_back(v);
      }
    }
  }

  std::vector<double> delta(n, 0.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t w = *it;
    for (std::size_t v : preds[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
  }
  delta[source] = 0.0;
  return delta;
}

}  // namespace

CentralityScores betweenness(const WeightedGraph& graph, EdgeLength mode) {
  const std::size_t n = graph.node_count;
  const auto arcs = traversal_arcs(graph, mode);
  std::vector<std::vector<double>> per_source(n);
  parallel_for(n, [&](std::size_t s) { per_source[s] = source_dependency(arcs, s); });
  CentralityScores scores(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t v = 0; v < n; ++v) scores[v] += per_source[s][v];
  }
  if (!graph.directed) {
    for (double& v : scores) v /= 2.0;
  }
  return scores;
}

// ---------------------------------------------------------------------------
// communities

std::size_t CommunityAssignment::count() const {
  if (community.empty()) return 0;
  return *std::max_element(community.begin(), community.end()) + 1;
}

namespace {

/// Symmetric adjacency in sparse row form; A_ii carries twice the loop weight.
using Adjacency = std::vector<std::map<std::size_t, double>>;

Adjacency symmetric_adjacency(const WeightedGraph& graph) {
  Adjacency adj(graph.node_count);
  for (const auto& e : graph.edges) {
    if (e.weight == 0.0) continue;
    if (e.from == e.to) {
      adj[e.from][e.from] += 2.0 * e.weight;
    } else {
      adj[e.from][e.to] += e.weight;
      adj[e.to][e.from] += e.weight;
    }
  }
  return adj;
}

std::vector<double> degrees(const Adjacency& adj) {
  std::vector<double> k(adj.size(), 0.0);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    for (const auto& [j, w] : adj[i]) k[i] += w;
  }
  return k;
}

double modularity_of(const Adjacency& adj, std::span<const std::size_t> assignment, double gamma) {
  const std::vector<double> k = degrees(adj);
  const double two_m = std::accumulate(k.begin(), k.end(), 0.0);
  if (two_m == 0.0) return 0.0;
  const std::size_t groups = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
  std::vector<double> inside(groups, 0.0);
  std::vector<double> total(groups, 0.0);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    total[assignment[i]] += k[i];
    for (const auto& [j, w] : adj[i]) {
      if (assignment[j] == assignment[i]) inside[assignment[i]] += w;
    }
  }
  double q = 0.0;
  for (std::size_t c = 0; c < groups; ++c) {
    const double share = total[c] / two_m;
    q += inside[c] / two_m - share * share / gamma;
  }
  return q;
}

/// Renumbers ids contiguously in order of first appearance.
std::vector<std::size_t> relabel(const std::vector<std::size_t>& ids) {
  std::map<std::size_t, std::size_t> mapping;
  std::vector<std::size_t> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = mapping.try_emplace(ids[i], mapping.size()).first->second;
  return out;
}

/// One local-moving phase; returns true when any node changed community.
bool local_moving(const Adjacency& adj, double resolution, std::mt19937_64& rng,
                  std::vector<std::size_t>& node_community) {
  const std::size_t n = adj.size();
  const std::vector<double> k = degrees(adj);
  const double two_m = std::accumulate(k.begin(), k.end(), 0.0);
  std::vector<double> total(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) total[node_community[i]] += k[i];

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const double tolerance = 1e-12 * two_m;
  bool any_move = false;
  for (std::size_t pass = 0; pass < 1000; ++pass) {
    bool moved = false;
    for (std::size_t i : order) {
      const std::size_t current = node_community[i];
      std::map<std::size_t, double> links;  // community -> weight from i
      links[current];
      for (const auto& [j, w] : adj[i]) {
        if (j != i) links[node_community[j]] += w;
      }
      total[current] -= k[i];
      auto gain = [&](std::size_t c, double weight) {
        return weight - resolution * k[i] * total[c] / two_m;
      };
      std::size_t best = current;
      double best_gain = gain(current, links[current]);
      for (const auto& [c, weight] : links) {
        const double g = gain(c, weight);
        if (g > best_gain + tolerance) {
          best = c;
          best_gain = g;
        }
      }
      total[best] += k[i];
      if (best != current) {
        node_community[i] = best;
        moved = true;
        any_move = true;
      }
    }
    if (!moved) break;
  }
  return any_move;
}

Adjacency aggregate(const Adjacency& adj, const std::vector<std::size_t>& community, std::size_t groups) {
  Adjacency out(groups);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    for (const auto& [j, w] : adj[i]) out[community[i]][community[j]] += w;
  }
  return out;
}

void check_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorKind::invalid_argument, fmt::format("resolution gamma must be positive, got {}", gamma));
  }
}

}  // namespace

double modularity(const WeightedGraph& graph, std::span<const std::size_t> assignment, double gamma) {
  check_gamma(gamma);
  if (assignment.size() != graph.node_count) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("assignment covers {} of {} nodes", assignment.size(), graph.node_count));
  }
  const std::vector<std::size_t> ids = relabel({assignment.begin(), assignment.end()});
  return modularity_of(symmetric_adjacency(graph), ids, gamma);
}

CommunityAssignment detect_communities(const WeightedGraph& graph, double gamma, std::uint64_t seed) {
  check_gamma(gamma);
  if (graph.node_count == 0) throw Error(ErrorKind::invalid_argument, "community detection on an empty graph");

  const Adjacency original = symmetric_adjacency(graph);
  std::vector<std::size_t> membership(graph.node_count);
  std::iota(membership.begin(), membership.end(), std::size_t{0});

  const double resolution = 1.0 / gamma;
  std::mt19937_64 rng(seed);
  Adjacency level = original;
  double two_m = 0.0;
  for (const auto& row : original) {
    for (const auto& [j, w] : row) two_m += w;
  }
  while (two_m > 0.0) {
    std::vector<std::size_t> local(level.size());
    std::iota(local.begin(), local.end(), std::size_t{0});
    if (!local_moving(level, resolution, rng, local)) break;
    local = relabel(local);
    const std::size_t groups = *std::max_element(local.begin(), local.end()) + 1;
    for (std::size_t& m : membership) m = local[m];
    if (groups == level.size()) break;
    level = aggregate(level, local, groups);
  }

  CommunityAssignment out;
  out.community = relabel(membership);
  out.gamma = gamma;
  out.modularity = modularity_of(original, out.community, gamma);
  return out;
}

}  // namespace nifflow
