#ifndef NIFFLOW_ESTIMATORS_HPP
#define NIFFLOW_ESTIMATORS_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "nifflow/matrix.hpp"
#include "nifflow/model_io.hpp"

namespace nifflow {

enum class EstimatorKind { ksg, histogram };

/// How the relevance term of the NIF score is formed.
///  - literal: I(X; Q) over the whole input, redundancy over features j < i.
///  - per_feature: I(X_i; Q), redundancy over every j != i.
enum class RelevanceMode { literal, per_feature };

std::string_view to_string(EstimatorKind kind) noexcept;
std::string_view to_string(RelevanceMode mode) noexcept;

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::ksg;
  std::size_t k = 5;
  std::size_t bins = 16;
  double beta = 5e-4;
  RelevanceMode relevance_mode = RelevanceMode::per_feature;
  std::uint64_t rng_seed = 0;

  /// Throws Error{invalid_argument} unless k >= 1, bins >= 2, beta >= 0 and,
  /// for KSG, k < samples.
  void validate(std::size_t samples) const;

  bool operator==(const EstimatorConfig&) const = default;
};

/// Mutual information in nats. `per_sample` holds the pointwise terms whose
/// mean is `value`.
struct MiEstimate {
  double value = 0.0;
  std::vector<double> per_sample;
  std::size_t k_used = 0;
  std::size_t samples = 0;
};

// Mixed continuous-discrete k-nearest-neighbour estimator, max-norm in each
// marginal. Per sample i:
//
//   rho_i   = distance to the k-th neighbour in the joint space
//   k_i     = k, or the number of exact joint duplicates when rho_i == 0
//   n_x,n_y = marginal neighbours strictly inside rho_i (at distance 0 when
//             rho_i == 0), excluding i
//   pmi_i   = psi(k_i) + log N - (log(n_x + 1) + log(n_y + 1))
//
// A constant x or y short-circuits to zero for every sample. Values tied in
// at most k samples are separated by a 1e-10 jitter seeded from rng_seed and
// the tied row's values, never from its position.
MiEstimate ksg_mi(const Matrix& x, std::span<const double> y, const EstimatorConfig& config);
MiEstimate ksg_mi(std::span<const double> x, std::span<const double> y, const EstimatorConfig& config);

/// Equal-width binned plug-in estimator (bins per axis from config). The
/// pointwise term is log(p(x, y) / (p(x) p(y))) at the sample's cell.
MiEstimate histogram_mi(const Matrix& x, std::span<const double> y, const EstimatorConfig& config);
MiEstimate histogram_mi(std::span<const double> x, std::span<const double> y,
                        const EstimatorConfig& config);

/// Dispatches on config.kind.
MiEstimate estimate_mi(const Matrix& x, std::span<const double> y, const EstimatorConfig& config);
MiEstimate estimate_mi(std::span<const double> x, std::span<const double> y,
                       const EstimatorConfig& config);

/// The pointwise term for one sample. Identical to estimate_mi(...).per_sample[i];
/// the KSG path costs O(N) instead of O(N^2).
double pmi_per_sample(std::span<const double> x, std::span<const double> y, std::size_t i,
                      const EstimatorConfig& config);

/// Symmetric matrix of I(X_i; X_j) between the columns of `inputs`; the
/// diagonal is left at zero.
Matrix pairwise_mi(const Matrix& inputs, const EstimatorConfig& config);

/// Redundancy sum for `feature` drawn from a pairwise_mi matrix according to
/// the relevance mode.
double redundancy_sum(const Matrix& pairwise, std::size_t feature, RelevanceMode mode);

struct NifTerms {
  double relevance = 0.0;
  double redundancy = 0.0;  // unweighted sum of pairwise MI
  double value = 0.0;       // relevance - beta * redundancy
};

/// Relevance-redundancy score between input feature `feature` and a target
/// variable observed on the same samples.
NifTerms nif_feature(const Matrix& inputs, std::size_t feature, std::span<const double> target,
                     const EstimatorConfig& config);

/// Same, with the target taken from unit `unit` of NIF layer `layer` (>= 1).
NifTerms nif_feature(const ActivationRecord& activations, std::size_t feature, std::size_t layer,
                     std::size_t unit, const EstimatorConfig& config);

}  // namespace nifflow

#endif  // NIFFLOW_ESTIMATORS_HPP
