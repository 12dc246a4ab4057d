#include "nifflow/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include <fmt/format.h>

#include "nifflow/error.hpp"
#include "nifflow/hash.hpp"

namespace nifflow {

namespace {

void check_prunable(const ModelGraph& model, const NifGraph& graph) {
  if (model.is_convolutional()) {
    throw Error(ErrorKind::unsupported, "pruning is defined for dense models only");
  }
  if (graph.model_fingerprint != model.fingerprint()) {
    throw Error(ErrorKind::invalid_argument, "graph was not built from this model (fingerprint mismatch)");
  }
  if (graph.layer_sizes != model.nif_layer_sizes()) {
    throw Error(ErrorKind::shape_mismatch, "graph layer sizes do not match the model");
  }
  check_layered(graph);
}

struct Mask {
  std::vector<std::vector<char>> pruned;  // per dense layer, out x in
};

}  // namespace

std::vector<std::size_t> prune_order(const NifGraph& graph) {
  std::vector<std::size_t> order(graph.edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const NifEdge& ea = graph.edges[a];
    const NifEdge& eb = graph.edges[b];
    return std::make_tuple(ea.clamped(), graph.nodes[ea.src].layer, ea.src, ea.dst) <
           std::make_tuple(eb.clamped(), graph.nodes[eb.src].layer, eb.src, eb.dst);
  });
  return order;
}

namespace {

ModelGraph apply_mask(const ModelGraph& model, const Mask& mask) {
  std::vector<Layer> layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Layer& layer = layers[l];
    const auto& pruned = mask.pruned[l];
    const std::size_t in = layer.weights.cols();
    for (std::size_t j = 0; j < layer.weights.rows(); ++j) {
      bool all_incoming = in > 0;
      for (std::size_t i = 0; i < in; ++i) {
        if (pruned[j * in + i]) {
          layer.weights(j, i) = 0.0;
        } else {
          all_incoming = false;
        }
      }
      if (all_incoming) layer.bias[j] = 0.0;
    }
  }
  return ModelGraph(model.input_shape(), model.class_count(), std::move(layers));
}

Mask empty_mask(const ModelGraph& model) {
  Mask mask;
  for (const Layer& layer : model.layers()) {
    mask.pruned.emplace_back(layer.weights.rows() * layer.weights.cols(), 0);
  }
  return mask;
}

void mark(Mask& mask, const ModelGraph& model, const NifGraph& graph, std::size_t edge_index) {
  const NifEdge& e = graph.edges[edge_index];
  const NifNode& src = graph.nodes[e.src];
  const NifNode& dst = graph.nodes[e.dst];
  const std::size_t layer = model.nif_layers()[src.layer];
  const std::size_t in = model.layers()[layer].weights.cols();
  mask.pruned[layer][dst.unit * in + src.unit] = 1;
}

}  // namespace

ModelGraph prune_model(const ModelGraph& model, const NifGraph& graph, std::size_t count) {
  check_prunable(model, graph);
  if (count > graph.edges.size()) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("cannot zero {} weights; model has {}", count, graph.edges.size()));
  }
  const std::vector<std::size_t> order = prune_order(graph);
  Mask mask = empty_mask(model);
  for (std::size_t r = 0; r < count; ++r) mark(mask, model, graph, order[r]);
  return apply_mask(model, mask);
}

std::vector<std::size_t> steps_from_fractions(std::size_t total, std::span<const double> fractions) {
  std::vector<std::size_t> counts;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw Error(ErrorKind::invalid_argument, fmt::format("pruning fraction {} outside [0, 1]", f));
    }
    counts.push_back(static_cast<std::size_t>(std::llround(f * static_cast<double>(total))));
  }
  return counts;
}

PruneReport prune_sweep(const ModelGraph& model, const Dataset& dataset, const NifGraph& graph,
                        std::span<const std::size_t> counts) {
  check_prunable(model, graph);
  check_compatible(model, dataset);
  const std::size_t total = graph.edges.size();
  std::vector<std::size_t> steps(counts.begin(), counts.end());
  for (std::size_t c : steps) {
    if (c > total) {
      throw Error(ErrorKind::invalid_argument,
                  fmt::format("step {} exceeds the model's {} prunable weights", c, total));
    }
  }
  steps.push_back(0);
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());

  PruneReport report;
  report.total_weights = total;
  report.model_fingerprint = model.fingerprint();
  report.graph_fingerprint = fnv1a_hex(export_graph(graph, ExportFormat::json));
  report.mode = graph.flow.mode;

  const std::vector<std::size_t> order = prune_order(graph);
  Mask mask = empty_mask(model);
  std::size_t applied = 0;
  for (std::size_t target : steps) {
    for (; applied < target; ++applied) mark(mask, model, graph, order[applied]);
    const double accuracy = target == 0 ? predict_accuracy(model, dataset)
                                        : predict_accuracy(apply_mask(model, mask), dataset);
    report.steps.push_back(PruneStep{target, accuracy});
  }
  return report;
}

std::string prune_report_csv(const PruneReport& report, const std::string& run_config) {
  std::string out;
  out += fmt::format("# model_fingerprint: {}\n", report.model_fingerprint);
  out += fmt::format("# graph_fingerprint: {}\n", report.graph_fingerprint);
  out += fmt::format("# mode: {}\n", to_string(report.mode));
  out += fmt::format("# total_weights: {}\n", report.total_weights);
  if (!run_config.empty()) out += fmt::format("# run_config: {}\n", run_config);
  out += "zeroed_weights,accuracy\n";
  for (const PruneStep& step : report.steps) out += fmt::format("{},{}\n", step.zeroed_weights, step.accuracy);
  return out;
}

}  // namespace nifflow
