#include "nifflow/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "nifflow/error.hpp"

namespace nifflow {

Matrix chain_product(std::span<const Matrix> layers) {
  if (layers.empty()) throw Error(ErrorKind::invalid_argument, "attribution needs at least one edge layer");
  Matrix acc = layers.front();
  for (std::size_t l = 1; l < layers.size(); ++l) acc = acc * layers[l];
  return acc;
}

AttributionMatrix attribution_matrix(const NifGraph& graph) {
  check_layered(graph);
  if (graph.layer_count() < 2) throw Error(ErrorKind::invalid_argument, "graph has no edge layers");
  const bool clamp = graph.flow.mode == FlowMode::mean_mi;
  std::vector<Matrix> layers;
  for (std::size_t l = 0; l + 1 < graph.layer_count(); ++l) layers.push_back(graph.layer_weights(l, clamp));

  AttributionMatrix out;
  out.values = chain_product(layers);
  for (std::size_t u = 0; u < graph.layer_sizes.front(); ++u) {
    out.feature_names.push_back(graph.nodes[graph.node_id(0, u)].label);
  }
  const std::size_t last = graph.layer_count() - 1;
  for (std::size_t u = 0; u < graph.layer_sizes.back(); ++u) {
    out.class_labels.push_back(graph.nodes[graph.node_id(last, u)].label);
  }
  return out;
}

SaliencyMap saliency_map(const ModelGraph& model, const Dataset& dataset, std::size_t sample,
                         std::size_t target_class, const EstimatorConfig& config) {
  if (!model.is_convolutional() || !model.input_shape().spatial) {
    throw Error(ErrorKind::unsupported, "saliency maps need a convolutional model with image input");
  }
  if (sample >= dataset.size()) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("sample {} out of range for {} samples", sample, dataset.size()));
  }
  if (target_class >= model.class_count()) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("class {} out of range for {} classes", target_class, model.class_count()));
  }
  const ActivationRecord record = forward(model, dataset);
  const NifGraph graph = build_nif_graph(model, record, config, FlowSpec{FlowMode::pmi, sample});
  const AttributionMatrix attribution = attribution_matrix(graph);

  const TensorShape& in = model.input_shape();
  SaliencyMap map;
  map.shape = ImageShape{in.height, in.width, in.channels};
  map.sample = sample;
  map.target_class = target_class;
  map.values.resize(attribution.values.rows());
  for (std::size_t p = 0; p < map.values.size(); ++p) map.values[p] = attribution.values(p, target_class);
  return map;
}

AttributionMatrix raw_mi_attribution(const ActivationRecord& activations, std::span<const int> labels,
                                     std::size_t class_count, const EstimatorConfig& config) {
  if (activations.layers.empty()) throw Error(ErrorKind::invalid_argument, "empty activation record");
  const Matrix& inputs = activations.layers[0].units;
  if (labels.size() != inputs.rows()) {
    throw Error(ErrorKind::shape_mismatch,
                fmt::format("{} labels for {} samples", labels.size(), inputs.rows()));
  }
  AttributionMatrix out;
  out.values = Matrix(inputs.cols(), class_count);
  for (std::size_t j = 0; j < class_count; ++j) {
    std::vector<double> indicator(labels.size());
    for (std::size_t s = 0; s < labels.size(); ++s) indicator[s] = labels[s] == static_cast<int>(j) ? 1.0 : 0.0;
    for (std::size_t i = 0; i < inputs.cols(); ++i) {
      out.values(i, j) = estimate_mi(inputs.column(i), indicator, config).value;
    }
  }
  for (std::size_t i = 0; i < inputs.cols(); ++i) out.feature_names.push_back(fmt::format("x{}", i));
  for (std::size_t j = 0; j < class_count; ++j) out.class_labels.push_back(fmt::format("y{}", j));
  return out;
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // Theta-function form, fast for small lambda.
    const double y = std::exp(-pi * pi / (8.0 * lambda * lambda));
    double sum = 0.0;
    for (int j = 1; j <= 50; ++j) {
      const double term = std::pow(y, (2 * j - 1) * (2 * j - 1));
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-17) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::invalid_argument, "K-S test needs two non-empty samples");
  for (double v : a) {
    if (std::isnan(v)) throw Error(ErrorKind::invalid_argument, "K-S sample contains NaN");
  }
  for (double v : b) {
    if (std::isnan(v)) throw Error(ErrorKind::invalid_argument, "K-S sample contains NaN");
  }
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());

  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double x = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == x) ++i;
    while (j < sb.size() && sb[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  // Once one sample is exhausted its ECDF is 1; the other only climbs toward 1.

  const double ne = na * nb / (na + nb);
  const double root = std::sqrt(ne);
  return KsResult{d, kolmogorov_survival((root + 0.12 + 0.11 / root) * d)};
}

}  // namespace nifflow
