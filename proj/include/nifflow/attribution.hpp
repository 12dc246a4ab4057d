#ifndef NIFFLOW_ATTRIBUTION_HPP
#define NIFFLOW_ATTRIBUTION_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nifflow/estimators.hpp"
#include "nifflow/matrix.hpp"
#include "nifflow/model_io.hpp"
#include "nifflow/nif_graph.hpp"

namespace nifflow {

/// n features x c classes.
struct AttributionMatrix {
  Matrix values;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_labels;
};

/// Sum over every input-to-class path of the product of its edge weights,
/// computed as the chain product W_0 W_1 ... W_{L-1} of per-layer weight
/// matrices. Mean-MI graphs use clamped weights; PMI graphs keep the sign.
AttributionMatrix attribution_matrix(const NifGraph& graph);

/// The same dynamic program over explicit layer matrices
/// (units_l x units_{l+1} each, at least one).
Matrix chain_product(std::span<const Matrix> layers);

/// Per-pixel map for one sample and one class, in the image's (h, w, ch)
/// feature order. Positive values support the class.
struct SaliencyMap {
  std::vector<double> values;
  ImageShape shape;
  std::size_t sample = 0;
  std::size_t target_class = 0;

  double at(std::size_t row, std::size_t col, std::size_t channel) const {
    return values[(row * shape.width + col) * shape.channels + channel];
  }
};

/// Builds the PMI flow graph at `sample` (pixel -> first-layer channel
/// averages, then channel averages / dense units) and reads column
/// `target_class` of its signed attribution matrix. Convolutional models only.
SaliencyMap saliency_map(const ModelGraph& model, const Dataset& dataset, std::size_t sample,
                         std::size_t target_class, const EstimatorConfig& config);

/// A_ij = I(feature i; [label == j]), the class side a discrete one-vs-rest
/// indicator.
AttributionMatrix raw_mi_attribution(const ActivationRecord& activations, std::span<const int> labels,
                                     std::size_t class_count, const EstimatorConfig& config);

struct KsResult {
  double statistic = 0.0;  // sup |ECDF_a - ECDF_b|
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test. The p-value uses the asymptotic
/// Kolmogorov distribution at lambda = (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) D,
/// ne = n m / (n + m).
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

}  // namespace nifflow

#endif  // NIFFLOW_ATTRIBUTION_HPP
