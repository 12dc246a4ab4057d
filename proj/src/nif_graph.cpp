#include "nifflow/nif_graph.hpp"

#include <algorithm>
#include <array>
#include <functional>

#include <fmt/format.h>

#include "json.hpp"
#include "nifflow/error.hpp"
#include "nifflow/parallel.hpp"

namespace nifflow {

using nlohmann::json;

std::string_view to_string(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::input_feature: return "input_feature";
    case NodeKind::hidden_neuron: return "hidden_neuron";
    case NodeKind::channel: return "channel";
    case NodeKind::class_output: return "class_output";
  }
  return "unknown";
}

std::string_view to_string(FlowMode mode) noexcept {
  return mode == FlowMode::mean_mi ? "mean_mi" : "pmi";
}

std::size_t NifGraph::node_id(std::size_t layer, std::size_t unit) const {
  if (layer >= layer_sizes.size() || unit >= layer_sizes[layer]) {
    throw Error(ErrorKind::invalid_argument, fmt::format("no node ({}, {})", layer, unit));
  }
  std::size_t id = unit;
  for (std::size_t l = 0; l < layer; ++l) id += layer_sizes[l];
  return id;
}

Matrix NifGraph::layer_weights(std::size_t layer, bool clamp) const {
  if (layer + 1 >= layer_sizes.size()) {
    throw Error(ErrorKind::invalid_argument, fmt::format("no edge layer {}", layer));
  }
  const std::size_t src_base = node_id(layer, 0);
  const std::size_t dst_base = node_id(layer + 1, 0);
  Matrix out(layer_sizes[layer], layer_sizes[layer + 1]);
  for (const NifEdge& e : edges) {
    if (nodes[e.src].layer != layer) continue;
    out(e.src - src_base, e.dst - dst_base) = clamp ? e.clamped() : e.weight_raw;
  }
  return out;
}

void normalize_per_layer(NifGraph& graph) {
  std::vector<double> peak(graph.layer_count(), 0.0);
  for (const NifEdge& e : graph.edges) {
    double& p = peak[graph.nodes[e.src].layer];
    p = std::max(p, e.clamped());
  }
  for (NifEdge& e : graph.edges) {
    const double p = peak[graph.nodes[e.src].layer];
    e.weight_norm = p > 0.0 ? e.clamped() / p : 0.0;
  }
}

void check_layered(const NifGraph& graph) {
  for (std::size_t i = 0; i < graph.edges.size(); ++i) {
    const NifEdge& e = graph.edges[i];
    if (e.src >= graph.nodes.size() || e.dst >= graph.nodes.size()) {
      throw Error(ErrorKind::invalid_argument, fmt::format("edge {} references a missing node", i));
    }
    if (graph.nodes[e.dst].layer != graph.nodes[e.src].layer + 1) {
      throw Error(ErrorKind::invalid_argument,
                  fmt::format("edge {} joins layers {} and {}; graph is not layered", i,
                              graph.nodes[e.src].layer, graph.nodes[e.dst].layer));
    }
  }
}

namespace {

std::string node_label(NodeKind kind, std::size_t layer, std::size_t unit,
                       const std::vector<std::string>& feature_names) {
  switch (kind) {
    case NodeKind::input_feature:
      return unit < feature_names.size() ? feature_names[unit] : fmt::format("x{}", unit);
    case NodeKind::class_output: return fmt::format("y{}", unit);
    case NodeKind::channel: return fmt::format("c{}_{}", layer, unit);
    case NodeKind::hidden_neuron: return fmt::format("h{}_{}", layer, unit);
  }
  return {};
}

struct EdgeTask {
  std::size_t layer;
  std::size_t src_unit;
  std::size_t dst_unit;
};

}  // namespace

NifGraph build_nif_graph(const ModelGraph& model, const ActivationRecord& activations,
                         const EstimatorConfig& config, FlowSpec flow,
                         const std::vector<std::string>& feature_names) {
  const std::vector<std::size_t> sizes = model.nif_layer_sizes();
  if (activations.layers.size() != sizes.size()) {
    throw Error(ErrorKind::shape_mismatch,
                fmt::format("activation record has {} layers, model has {}", activations.layers.size(),
                            sizes.size()));
  }
  const std::size_t n = activations.layers[0].units.rows();
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    const Matrix& units = activations.layers[l].units;
    if (units.cols() != sizes[l] || units.rows() != n) {
      throw Error(ErrorKind::shape_mismatch,
                  fmt::format("activation layer {} is {}x{}, expected {}x{}", l, units.rows(),
                              units.cols(), n, sizes[l]));
    }
  }
  config.validate(n);
  if (flow.mode == FlowMode::pmi && flow.sample >= n) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("sample {} out of range for {} samples", flow.sample, n));
  }

  NifGraph graph;
  graph.layer_sizes = sizes;
  graph.flow = flow;
  graph.config = config;
  graph.model_fingerprint = model.fingerprint();
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    NodeKind kind = NodeKind::hidden_neuron;
    if (l == 0) {
      kind = NodeKind::input_feature;
    } else if (l + 1 == sizes.size()) {
      kind = NodeKind::class_output;
    } else if (model.layers()[model.nif_layers()[l - 1]].kind == LayerKind::conv2d) {
      kind = NodeKind::channel;
    }
    for (std::size_t u = 0; u < sizes[l]; ++u) {
      graph.nodes.push_back(NifNode{l, u, kind, node_label(kind, l, u, feature_names)});
    }
  }

  std::vector<std::vector<std::vector<double>>> columns(sizes.size());
  for (std::size_t l = 0; l < sizes.size(); ++l) {
    for (std::size_t u = 0; u < sizes[l]; ++u) columns[l].push_back(activations.layers[l].units.column(u));
  }

  std::vector<EdgeTask> tasks;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    for (std::size_t i = 0; i < sizes[l]; ++i) {
      for (std::size_t j = 0; j < sizes[l + 1]; ++j) tasks.push_back(EdgeTask{l, i, j});
    }
  }

  // Input-layer edges: relevance minus beta-weighted redundancy.
  std::vector<double> redundancy(sizes[0], 0.0);
  std::vector<double> whole_input_relevance;
  if (flow.mode == FlowMode::mean_mi) {
    const Matrix& inputs = activations.layers[0].units;
    const Matrix pairwise = pairwise_mi(inputs, config);
    for (std::size_t i = 0; i < sizes[0]; ++i) {
      redundancy[i] = redundancy_sum(pairwise, i, config.relevance_mode);
    }
    if (config.relevance_mode == RelevanceMode::literal) {
      whole_input_relevance.resize(sizes[1]);
      parallel_for(sizes[1], [&](std::size_t j) {
        whole_input_relevance[j] = estimate_mi(inputs, columns[1][j], config).value;
      });
    }
  }

  std::vector<double> raw(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t t) {
    const EdgeTask& task = tasks[t];
    const auto& src = columns[task.layer][task.src_unit];
    const auto& dst = columns[task.layer + 1][task.dst_unit];
    try {
      if (flow.mode == FlowMode::pmi) {
        raw[t] = pmi_per_sample(src, dst, flow.sample, config);
      } else if (task.layer == 0) {
        const double relevance = config.relevance_mode == RelevanceMode::literal
                                     ? whole_input_relevance[task.dst_unit]
                                     : estimate_mi(src, dst, config).value;
        const bool silent = std::adjacent_find(dst.begin(), dst.end(), std::not_equal_to<>()) == dst.end();
        raw[t] = silent ? 0.0 : relevance - config.beta * redundancy[task.src_unit];
      } else {
        raw[t] = estimate_mi(src, dst, config).value;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("edge (layer {}, src {}, dst {}): {}", task.layer,
                                        task.src_unit, task.dst_unit, e.what()));
    }
  });

  graph.edges.reserve(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const EdgeTask& task = tasks[t];
    graph.edges.push_back(NifEdge{graph.node_id(task.layer, task.src_unit),
                                  graph.node_id(task.layer + 1, task.dst_unit), raw[t], 0.0});
  }
  normalize_per_layer(graph);
  return graph;
}

ExportFormat parse_export_format(std::string_view name) {
  if (name == "dot") return ExportFormat::dot;
  if (name == "graphml") return ExportFormat::graphml;
  if (name == "json") return ExportFormat::json;
  throw Error(ErrorKind::invalid_argument, fmt::format("unknown export format '{}'", name));
}

// ---------------------------------------------------------------------------
// export

namespace {

constexpr std::array<std::string_view, 12> kPalette = {
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462",
    "#b3de69", "#fccde5", "#d9d9d9", "#bc80bd", "#ccebc5", "#ffed6f"};

std::string quote_dot(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

std::string escape_xml(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> graph_attributes(const NifGraph& g) {
  std::vector<std::pair<std::string, std::string>> attrs = {
      {"mode", std::string(to_string(g.flow.mode))},
      {"sample", g.flow.mode == FlowMode::pmi ? fmt::format("{}", g.flow.sample) : std::string{}},
      {"estimator", std::string(to_string(g.config.kind))},
      {"k", fmt::format("{}", g.config.k)},
      {"bins", fmt::format("{}", g.config.bins)},
      {"beta", fmt::format("{}", g.config.beta)},
      {"relevance", std::string(to_string(g.config.relevance_mode))},
      {"seed", fmt::format("{}", g.config.rng_seed)},
      {"model_fingerprint", g.model_fingerprint},
  };
  if (g.analytics) {
    attrs.emplace_back("gamma", fmt::format("{}", g.analytics->gamma));
    attrs.emplace_back("modularity", fmt::format("{}", g.analytics->modularity));
    attrs.emplace_back("edge_length", g.analytics->edge_length);
  }
  if (!g.run_config.empty()) attrs.emplace_back("run_config", g.run_config);
  return attrs;
}

std::string to_dot(const NifGraph& g) {
  std::string out = "digraph nif {\n  graph [rankdir=LR";
  for (const auto& [key, value] : graph_attributes(g)) out += fmt::format(", {}={}", key, quote_dot(value));
  out += "];\n  node [shape=circle, style=filled, fillcolor=\"#ffffff\"];\n";

  double peak = 0.0;
  if (g.analytics) {
    for (double c : g.analytics->centrality) peak = std::max(peak, c);
  }
  for (std::size_t id = 0; id < g.nodes.size(); ++id) {
    const NifNode& node = g.nodes[id];
    out += fmt::format("  n{} [label={}, layer={}, unit={}, kind=\"{}\"", id, quote_dot(node.label),
                       node.layer, node.unit, to_string(node.kind));
    if (g.analytics) {
      const double c = g.analytics->centrality[id];
      const std::size_t community = g.analytics->community[id];
      const double width = 0.25 + 1.5 * (peak > 0.0 ? c / peak : 0.0);
      out += fmt::format(", centrality={}, community={}, width={:.4f}, fixedsize=true, fillcolor=\"{}\"", c,
                         community, width, kPalette[community % kPalette.size()]);
    }
    out += "];\n";
  }
  for (std::size_t l = 0; l < g.layer_count(); ++l) {
    out += "  { rank=same;";
    for (std::size_t id = 0; id < g.nodes.size(); ++id) {
      if (g.nodes[id].layer == l) out += fmt::format(" n{};", id);
    }
    out += " }\n";
  }
  for (const NifEdge& e : g.edges) {
    out += fmt::format("  n{} -> n{} [weight_raw={}, weight_norm={}, penwidth={:.4f}];\n", e.src, e.dst,
                       e.weight_raw, e.weight_norm, 5.0 * e.weight_norm);
  }
  out += "}\n";
  return out;
}

std::string to_graphml(const NifGraph& g) {
  std::string out =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n";
  const auto attrs = graph_attributes(g);
  for (const auto& [key, value] : attrs) {
    out += fmt::format("  <key id=\"g_{0}\" for=\"graph\" attr.name=\"{0}\" attr.type=\"string\"/>\n", key);
  }
  out +=
      "  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n"
      "  <key id=\"layer\" for=\"node\" attr.name=\"layer\" attr.type=\"int\"/>\n"
      "  <key id=\"unit\" for=\"node\" attr.name=\"unit\" attr.type=\"int\"/>\n"
      "  <key id=\"kind\" for=\"node\" attr.name=\"kind\" attr.type=\"string\"/>\n";
  if (g.analytics) {
    out +=
        "  <key id=\"centrality\" for=\"node\" attr.name=\"centrality\" attr.type=\"double\"/>\n"
        "  <key id=\"community\" for=\"node\" attr.name=\"community\" attr.type=\"int\"/>\n";
  }
  out +=
      "  <key id=\"weight_raw\" for=\"edge\" attr.name=\"weight_raw\" attr.type=\"double\"/>\n"
      "  <key id=\"weight_norm\" for=\"edge\" attr.name=\"weight_norm\" attr.type=\"double\"/>\n"
      "  <graph id=\"nif\" edgedefault=\"directed\">\n";
  for (const auto& [key, value] : attrs) {
    out += fmt::format("    <data key=\"g_{}\">{}</data>\n", key, escape_xml(value));
  }
  for (std::size_t id = 0; id < g.nodes.size(); ++id) {
    const NifNode& node = g.nodes[id];
    out += fmt::format(
        "    <node id=\"n{}\">\n      <data key=\"label\">{}</data>\n      <data key=\"layer\">{}</data>\n"
        "      <data key=\"unit\">{}</data>\n      <data key=\"kind\">{}</data>\n",
        id, escape_xml(node.label), node.layer, node.unit, to_string(node.kind));
    if (g.analytics) {
      out += fmt::format("      <data key=\"centrality\">{}</data>\n      <data key=\"community\">{}</data>\n",
                         g.analytics->centrality[id], g.analytics->community[id]);
    }
    out += "    </node>\n";
  }
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const NifEdge& e = g.edges[i];
    out += fmt::format(
        "    <edge id=\"e{}\" source=\"n{}\" target=\"n{}\">\n      <data key=\"weight_raw\">{}</data>\n"
        "      <data key=\"weight_norm\">{}</data>\n    </edge>\n",
        i, e.src, e.dst, e.weight_raw, e.weight_norm);
  }
  out += "  </graph>\n</graphml>\n";
  return out;
}

json to_json_doc(const NifGraph& g) {
  json doc;
  doc["format"] = "nifflow-graph";
  doc["version"] = 1;
  doc["mode"] = to_string(g.flow.mode);
  doc["sample"] = g.flow.mode == FlowMode::pmi ? json(g.flow.sample) : json(nullptr);
  doc["model_fingerprint"] = g.model_fingerprint;
  doc["estimator"] = {{"kind", to_string(g.config.kind)},
                      {"k", g.config.k},
                      {"bins", g.config.bins},
                      {"beta", g.config.beta},
                      {"relevance_mode", to_string(g.config.relevance_mode)},
                      {"rng_seed", g.config.rng_seed}};
  doc["layer_sizes"] = g.layer_sizes;
  json nodes = json::array();
  for (std::size_t id = 0; id < g.nodes.size(); ++id) {
    const NifNode& node = g.nodes[id];
    json entry = {{"id", id},
                  {"layer", node.layer},
                  {"unit", node.unit},
                  {"kind", to_string(node.kind)},
                  {"label", node.label}};
    if (g.analytics) {
      entry["centrality"] = g.analytics->centrality[id];
      entry["community"] = g.analytics->community[id];
    }
    nodes.push_back(entry);
  }
  doc["nodes"] = nodes;
  json edges = json::array();
  for (const NifEdge& e : g.edges) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"weight_raw", e.weight_raw}, {"weight_norm", e.weight_norm}});
  }
  doc["edges"] = edges;
  if (g.analytics) {
    doc["analysis"] = {{"gamma", g.analytics->gamma},
                       {"modularity", g.analytics->modularity},
                       {"edge_length", g.analytics->edge_length}};
  }
  if (!g.run_config.empty()) doc["run_config"] = json::parse(g.run_config);
  return doc;
}

NodeKind parse_node_kind(const std::string& name) {
  if (name == "input_feature") return NodeKind::input_feature;
  if (name == "hidden_neuron") return NodeKind::hidden_neuron;
  if (name == "channel") return NodeKind::channel;
  if (name == "class_output") return NodeKind::class_output;
  throw Error(ErrorKind::parse, fmt::format("unknown node kind '{}'", name));
}

}  // namespace

std::string export_graph(const NifGraph& graph, ExportFormat format, bool require_analytics) {
  if (require_analytics && !graph.analytics) {
    throw Error(ErrorKind::invalid_argument, "centrality/community requested but not computed");
  }
  if (graph.analytics && (graph.analytics->centrality.size() != graph.nodes.size() ||
                          graph.analytics->community.size() != graph.nodes.size())) {
    throw Error(ErrorKind::invalid_argument, "analytics do not cover every node");
  }
  switch (format) {
    case ExportFormat::dot: return to_dot(graph);
    case ExportFormat::graphml: return to_graphml(graph);
    case ExportFormat::json: return to_json_doc(graph).dump(1) + "\n";
  }
  throw Error(ErrorKind::invalid_argument, "unknown export format");
}

NifGraph import_graph_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string{}) != "nifflow-graph") {
      throw Error(ErrorKind::parse, "not a nifflow graph document");
    }
    NifGraph g;
    const std::string mode = doc.at("mode").get<std::string>();
    if (mode == "pmi") {
      g.flow = FlowSpec{FlowMode::pmi, doc.at("sample").get<std::size_t>()};
    } else if (mode == "mean_mi") {
      g.flow = FlowSpec{FlowMode::mean_mi, 0};
    } else {
      throw Error(ErrorKind::parse, fmt::format("unknown mode '{}'", mode));
    }
    g.model_fingerprint = doc.at("model_fingerprint").get<std::string>();
    const json& est = doc.at("estimator");
    g.config.kind = est.at("kind").get<std::string>() == "ksg" ? EstimatorKind::ksg : EstimatorKind::histogram;
    g.config.k = est.at("k").get<std::size_t>();
    g.config.bins = est.at("bins").get<std::size_t>();
    g.config.beta = est.at("beta").get<double>();
    g.config.relevance_mode = est.at("relevance_mode").get<std::string>() == "literal"
                                  ? RelevanceMode::literal
                                  : RelevanceMode::per_feature;
    g.config.rng_seed = est.at("rng_seed").get<std::uint64_t>();
    g.layer_sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();

    const bool has_analytics = doc.contains("analysis");
    GraphAnalytics analytics;
    for (const json& entry : doc.at("nodes")) {
      g.nodes.push_back(NifNode{entry.at("layer").get<std::size_t>(), entry.at("unit").get<std::size_t>(),
                                parse_node_kind(entry.at("kind").get<std::string>()),
                                entry.at("label").get<std::string>()});
      if (has_analytics) {
        analytics.centrality.push_back(entry.at("centrality").get<double>());
        analytics.community.push_back(entry.at("community").get<std::size_t>());
      }
    }
    for (const json& entry : doc.at("edges")) {
      g.edges.push_back(NifEdge{entry.at("src").get<std::size_t>(), entry.at("dst").get<std::size_t>(),
                                entry.at("weight_raw").get<double>(), entry.at("weight_norm").get<double>()});
    }
    if (has_analytics) {
      const json& a = doc.at("analysis");
      analytics.gamma = a.at("gamma").get<double>();
      analytics.modularity = a.at("modularity").get<double>();
      analytics.edge_length = a.at("edge_length").get<std::string>();
      g.analytics = std::move(analytics);
    }
    if (doc.contains("run_config")) g.run_config = doc.at("run_config").dump();
    check_layered(g);
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, fmt::format("graph document: {}", e.what()));
  }
}

}  // namespace nifflow
