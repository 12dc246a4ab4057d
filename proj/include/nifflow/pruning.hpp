#ifndef NIFFLOW_PRUNING_HPP
#define NIFFLOW_PRUNING_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nifflow/model_io.hpp"
#include "nifflow/nif_graph.hpp"

namespace nifflow {

struct PruneStep {
  std::size_t zeroed_weights = 0;
  double accuracy = 0.0;

  bool operator==(const PruneStep&) const = default;
};

struct PruneReport {
  std::vector<PruneStep> steps;  // counts strictly increasing, first is 0
  std::size_t total_weights = 0;
  std::string graph_fingerprint;
  std::string model_fingerprint;
  FlowMode mode = FlowMode::mean_mi;
};

/// Edge indices of `graph` in pruning order: ascending clamped raw weight,
/// ties broken by (layer, src, dst).
std::vector<std::size_t> prune_order(const NifGraph& graph);

/// Copy of `model` with the `count` lowest-ranked edges' weights zeroed.
/// Edge (l, i) -> (l + 1, j) maps to weight [j][i] of dense layer l. A bias
/// is zeroed once every incoming weight of its neuron has been pruned.
ModelGraph prune_model(const ModelGraph& model, const NifGraph& graph, std::size_t count);

/// Rounds fractions of `total` to counts.
std::vector<std::size_t> steps_from_fractions(std::size_t total, std::span<const double> fractions);

/// Accuracy on `dataset` after zeroing each requested number of edges. The
/// baseline (0) is always included; the input model is never modified.
/// Dense models only.
PruneReport prune_sweep(const ModelGraph& model, const Dataset& dataset, const NifGraph& graph,
                        std::span<const std::size_t> counts);

/// "zeroed_weights,accuracy" rows, preceded by `# key: value` provenance lines.
std::string prune_report_csv(const PruneReport& report, const std::string& run_config = {});

}  // namespace nifflow

#endif  // NIFFLOW_PRUNING_HPP
