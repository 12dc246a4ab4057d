#ifndef NIFFLOW_NIF_GRAPH_HPP
#define NIFFLOW_NIF_GRAPH_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nifflow/estimators.hpp"
#include "nifflow/matrix.hpp"
#include "nifflow/model_io.hpp"

namespace nifflow {

enum class NodeKind { input_feature, hidden_neuron, channel, class_output };
enum class FlowMode { mean_mi, pmi };

std::string_view to_string(NodeKind kind) noexcept;
std::string_view to_string(FlowMode mode) noexcept;

/// Edge weighting: mean MI over the dataset, or PMI at a single sample.
struct FlowSpec {
  FlowMode mode = FlowMode::mean_mi;
  std::size_t sample = 0;  // pmi only

  bool operator==(const FlowSpec&) const = default;
};

struct NifNode {
  std::size_t layer = 0;  // 0 = input
  std::size_t unit = 0;
  NodeKind kind = NodeKind::hidden_neuron;
  std::string label;

  bool operator==(const NifNode&) const = default;
};

struct NifEdge {
  std::size_t src = 0;  // node ids
  std::size_t dst = 0;
  double weight_raw = 0.0;   // nats, unclamped
  double weight_norm = 0.0;  // clamped, divided by the layer maximum

  double clamped() const noexcept { return weight_raw > 0.0 ? weight_raw : 0.0; }
  bool operator==(const NifEdge&) const = default;
};

/// Centrality and community results carried into exports.
struct GraphAnalytics {
  std::vector<double> centrality;
  std::vector<std::size_t> community;
  double gamma = 1.0;
  double modularity = 0.0;
  std::string edge_length;  // "inverse" or "unit"

  bool operator==(const GraphAnalytics&) const = default;
};

/// Layered DAG: node ids are ordered by (layer, unit) and edges by
/// (layer, src, dst). Edges only join consecutive layers.
struct NifGraph {
  std::vector<std::size_t> layer_sizes;
  std::vector<NifNode> nodes;
  std::vector<NifEdge> edges;
  FlowSpec flow;
  EstimatorConfig config;
  std::string model_fingerprint;
  std::optional<GraphAnalytics> analytics;
  std::string run_config;  // JSON object text embedded in exports; may be empty

  std::size_t layer_count() const noexcept { return layer_sizes.size(); }
  std::size_t node_id(std::size_t layer, std::size_t unit) const;
  /// units(l) x units(l + 1) matrix of clamped (or signed) raw weights.
  Matrix layer_weights(std::size_t layer, bool clamp) const;

  bool operator==(const NifGraph&) const = default;
};

/// Builds the flow graph between every pair of units in consecutive NIF
/// layers. Input-layer edges in mean_mi mode carry the relevance-redundancy
/// score; deeper edges carry plain MI. pmi mode stores the pointwise term at
/// `flow.sample` on every edge. Normalization is applied per edge layer.
NifGraph build_nif_graph(const ModelGraph& model, const ActivationRecord& activations,
                         const EstimatorConfig& config, FlowSpec flow,
                         const std::vector<std::string>& feature_names = {});

/// Recomputes weight_norm = max(raw, 0) / (layer max of max(raw, 0)), or 0.
void normalize_per_layer(NifGraph& graph);

/// Throws unless every edge joins consecutive layers and ids are in range.
void check_layered(const NifGraph& graph);

enum class ExportFormat { dot, graphml, json };

ExportFormat parse_export_format(std::string_view name);

/// Byte-stable serialization. With `require_analytics`, a graph without
/// centrality/community results is rejected.
std::string export_graph(const NifGraph& graph, ExportFormat format, bool require_analytics = false);

NifGraph import_graph_json(std::string_view text);

}  // namespace nifflow

#endif  // NIFFLOW_NIF_GRAPH_HPP
