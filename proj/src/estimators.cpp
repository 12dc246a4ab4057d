#include "nifflow/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/special_functions/digamma.hpp>
#include <fmt/format.h>

#include "nifflow/error.hpp"
#include "nifflow/parallel.hpp"

namespace nifflow {

std::string_view to_string(EstimatorKind kind) noexcept {
  return kind == EstimatorKind::ksg ? "ksg" : "histogram";
}

std::string_view to_string(RelevanceMode mode) noexcept {
  return mode == RelevanceMode::literal ? "literal" : "per_feature";
}

void EstimatorConfig::validate(std::size_t samples) const {
  if (k < 1) throw Error(ErrorKind::invalid_argument, "k must be at least 1");
  if (bins < 2) throw Error(ErrorKind::invalid_argument, "bins must be at least 2");
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw Error(ErrorKind::invalid_argument, "beta must be a finite nonnegative number");
  }
  if (samples == 0) throw Error(ErrorKind::invalid_argument, "no samples");
  if (kind == EstimatorKind::ksg && k >= samples) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("KSG needs more than k samples (k = {}, N = {})", k, samples));
  }
}

namespace {

constexpr double kJitter = 1e-10;

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t value_bits(double v) {
  // +0 and -0 compare equal and must hash equal.
  return std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v);
}

/// Samples stored row-major: x is N x dx, y is N x dy.
struct Sample {
  std::size_t n = 0;
  std::size_t dx = 0;
  std::size_t dy = 0;
  std::vector<double> x;
  std::vector<double> y;
  bool degenerate = false;  // x or y constant across all samples
};

void check_finite(std::span<const double> values, const char* name) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::estimator, fmt::format("non-finite value in {}", name));
  }
}

bool rows_constant(const std::vector<double>& data, std::size_t n, std::size_t d) {
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      if (data[i * d + c] != data[c]) return false;
    }
  }
  return true;
}

Sample make_sample(const Matrix& x, std::span<const double> y) {
  if (x.rows() != y.size()) {
    throw Error(ErrorKind::shape_mismatch,
                fmt::format("x has {} samples, y has {}", x.rows(), y.size()));
  }
  if (x.cols() == 0) throw Error(ErrorKind::shape_mismatch, "x has no columns");
  check_finite(x.data(), "x");
  check_finite(y, "y");
  Sample s;
  s.n = y.size();
  s.dx = x.cols();
  s.dy = 1;
  s.x.assign(x.data().begin(), x.data().end());
  s.y.assign(y.begin(), y.end());
  s.degenerate = rows_constant(s.x, s.n, s.dx) || rows_constant(s.y, s.n, s.dy);
  return s;
}

std::uint64_t row_hash(const std::vector<double>& data, std::size_t d, std::size_t row) {
  std::uint64_t h = 0x51ed270b27a3c1f5ULL;
  for (std::size_t c = 0; c < d; ++c) h = splitmix64(h ^ value_bits(data[row * d + c]));
  return h;
}

/// Separates ties too small to form an atom at the k-neighbour scale. Atoms
/// (more than k copies) are left intact for the rho == 0 counting path.
void jitter_small_ties(std::vector<double>& data, std::size_t d, std::size_t n,
                       const std::vector<std::uint64_t>& rows, std::size_t k, std::uint64_t seed) {
  const std::vector<double> original = data;
  std::vector<std::size_t> order(n);
  for (std::size_t c = 0; c < d; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return original[a * d + c] < original[b * d + c];
    });
    std::size_t start = 0;
    while (start < n) {
      std::size_t end = start + 1;
      const double value = original[order[start] * d + c];
      while (end < n && original[order[end] * d + c] == value) ++end;
      const std::size_t multiplicity = end - start;
      if (multiplicity >= 2 && multiplicity <= k) {
        for (std::size_t t = start; t < end; ++t) {
          const std::size_t r = order[t];
          const std::uint64_t key =
              splitmix64(seed ^ splitmix64(rows[r] ^ splitmix64(value_bits(value) + c + 1)));
          const double unit = static_cast<double>(key >> 11) * 0x1.0p-53;  // [0, 1)
          data[r * d + c] = value + kJitter * (2.0 * unit - 1.0);
        }
      }
      start = end;
    }
  }
}

void apply_jitter(Sample& s, std::size_t k, std::uint64_t seed) {
  std::vector<std::uint64_t> rows(s.n);
  for (std::size_t r = 0; r < s.n; ++r) {
    // Commutative combination so that swapping x and y keys identically.
    rows[r] = splitmix64(row_hash(s.x, s.dx, r)) + splitmix64(row_hash(s.y, s.dy, r));
  }
  jitter_small_ties(s.x, s.dx, s.n, rows, k, seed);
  jitter_small_ties(s.y, s.dy, s.n, rows, k, seed);
}

double chebyshev(const std::vector<double>& data, std::size_t d, std::size_t a, std::size_t b) {
  double out = 0.0;
  for (std::size_t c = 0; c < d; ++c) out = std::max(out, std::abs(data[a * d + c] - data[b * d + c]));
  return out;
}

struct Scratch {
  std::vector<double> dx, dy, joint;
};

double ksg_point(const Sample& s, std::size_t i, std::size_t k, Scratch& scratch) {
  const std::size_t others = s.n - 1;
  scratch.dx.resize(others);
  scratch.dy.resize(others);
  scratch.joint.resize(others);
  for (std::size_t j = 0, t = 0; j < s.n; ++j) {
    if (j == i) continue;
    scratch.dx[t] = chebyshev(s.x, s.dx, i, j);
    scratch.dy[t] = chebyshev(s.y, s.dy, i, j);
    scratch.joint[t] = std::max(scratch.dx[t], scratch.dy[t]);
    ++t;
  }
  std::vector<double>& joint = scratch.joint;
  std::nth_element(joint.begin(), joint.begin() + static_cast<std::ptrdiff_t>(k - 1), joint.end());
  const double rho = joint[k - 1];

  std::size_t k_used = k;
  std::size_t nx = 0;
  std::size_t ny = 0;
  if (rho == 0.0) {
    k_used = 0;
    for (std::size_t t = 0; t < others; ++t) {
      nx += scratch.dx[t] == 0.0;
      ny += scratch.dy[t] == 0.0;
      k_used += scratch.dx[t] == 0.0 && scratch.dy[t] == 0.0;
    }
  } else {
    for (std::size_t t = 0; t < others; ++t) {
      nx += scratch.dx[t] < rho;
      ny += scratch.dy[t] < rho;
    }
  }
  const double alpha = std::log(static_cast<double>(nx + 1)) + std::log(static_cast<double>(ny + 1));
  return boost::math::digamma(static_cast<double>(k_used)) + std::log(static_cast<double>(s.n)) - alpha;
}

/// Values of one column in ascending order, for counting neighbours by bisection.
struct SortedAxis {
  std::vector<double> values;

  explicit SortedAxis(const std::vector<double>& column) : values(column) {
    std::sort(values.begin(), values.end());
  }

  // Count of v with |v - centre| < radius, self included. fl(v - centre) is
  // monotone in v, so each side is a partition of the same predicate the
  // brute-force path evaluates.
  std::size_t within(double centre, double radius) const {
    const auto mid = std::lower_bound(values.begin(), values.end(), centre);
    const auto left = std::partition_point(values.begin(), mid, [&](double v) { return std::abs(v - centre) >= radius; });
    const auto right = std::partition_point(mid, values.end(), [&](double v) { return std::abs(v - centre) < radius; });
    return static_cast<std::size_t>(right - left);
  }

  std::size_t equal(double centre) const {
    const auto [lo, hi] = std::equal_range(values.begin(), values.end(), centre);
    return static_cast<std::size_t>(hi - lo);
  }
};

/// Scalar x and y: walks outwards in x order and stops once the x gap alone
/// exceeds the current k-th joint distance. Same result as ksg_point.
std::vector<double> ksg_scalar(const Sample& s, std::size_t k) {
  const std::size_t n = s.n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
  const SortedAxis xs(s.x);
  const SortedAxis ys(s.y);
  const double log_n = std::log(static_cast<double>(n));
  constexpr double kFar = std::numeric_limits<double>::infinity();

  std::vector<double> out(n);
  std::vector<double> heap;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t i = order[p];
    const double xi = s.x[i];
    const double yi = s.y[i];
    heap.clear();
    auto offer = [&](std::size_t j) {
      const double d = std::max(std::abs(xi - s.x[j]), std::abs(yi - s.y[j]));
      if (heap.size() < k) {
        heap.push_back(d);
        std::push_heap(heap.begin(), heap.end());
      } else if (d < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = d;
        std::push_heap(heap.begin(), heap.end());
      }
    };
    std::size_t lo = p;
    std::size_t hi = p + 1;
    while (lo > 0 || hi < n) {
      const double gap_lo = lo > 0 ? std::abs(xi - s.x[order[lo - 1]]) : kFar;
      const double gap_hi = hi < n ? std::abs(xi - s.x[order[hi]]) : kFar;
      const double gap = std::min(gap_lo, gap_hi);
      if (heap.size() == k && gap >= heap.front()) break;
      if (gap_lo <= gap_hi) offer(order[--lo]);
      else offer(order[hi++]);
    }
    const double rho = heap.front();

    std::size_t k_used = k;
    std::size_t nx = 0;
    std::size_t ny = 0;
    if (rho == 0.0) {
      nx = xs.equal(xi) - 1;
      ny = ys.equal(yi) - 1;
      k_used = 0;
      const auto first = std::partition_point(order.begin(), order.end(), [&](std::size_t j) { return s.x[j] < xi; });
      for (auto it = first; it != order.end() && s.x[*it] == xi; ++it) k_used += *it != i && s.y[*it] == yi;
    } else {
      nx = xs.within(xi, rho) - 1;
      ny = ys.within(yi, rho) - 1;
    }
    const double alpha = std::log(static_cast<double>(nx + 1)) + std::log(static_cast<double>(ny + 1));
    out[i] = boost::math::digamma(static_cast<double>(k_used)) + log_n - alpha;
  }
  return out;
}

MiEstimate zero_estimate(std::size_t n, std::size_t k) {
  return MiEstimate{0.0, std::vector<double>(n, 0.0), k, n};
}

double mean(const std::vector<double>& values) {
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

MiEstimate ksg_on_sample(Sample s, const EstimatorConfig& config) {
  config.validate(s.n);
  if (s.degenerate) return zero_estimate(s.n, config.k);
  apply_jitter(s, config.k, config.rng_seed);
  MiEstimate out;
  out.samples = s.n;
  out.k_used = config.k;
  out.per_sample.resize(s.n);
  if (s.dx == 1 && s.dy == 1) {
    out.per_sample = ksg_scalar(s, config.k);
  } else {
    Scratch scratch;
    for (std::size_t i = 0; i < s.n; ++i) out.per_sample[i] = ksg_point(s, i, config.k, scratch);
  }
  out.value = mean(out.per_sample);
  return out;
}

Matrix as_column(std::span<const double> x) {
  Matrix m(x.size(), 1);
  std::copy(x.begin(), x.end(), m.data().begin());
  return m;
}

// Histogram -------------------------------------------------------------------

std::vector<std::size_t> bin_column(std::span<const double> values, std::size_t bins) {
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<std::size_t> out(values.size(), 0);
  if (hi == lo) return out;
  const double width = hi - lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double scaled = (values[i] - lo) / width * static_cast<double>(bins);
    out[i] = std::min(bins - 1, static_cast<std::size_t>(scaled));
  }
  return out;
}

/// Dense cell id per sample for a (possibly multi-column) variable.
std::vector<std::size_t> cell_ids(const Matrix& x, std::size_t bins) {
  std::vector<std::vector<std::size_t>> per_column;
  for (std::size_t c = 0; c < x.cols(); ++c) per_column.push_back(bin_column(x.column(c), bins));
  std::map<std::vector<std::size_t>, std::size_t> ids;
  std::vector<std::size_t> out(x.rows());
  std::vector<std::size_t> key(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) key[c] = per_column[c][r];
    out[r] = ids.try_emplace(key, ids.size()).first->second;
  }
  return out;
}

}  // namespace

MiEstimate ksg_mi(const Matrix& x, std::span<const double> y, const EstimatorConfig& config) {
  return ksg_on_sample(make_sample(x, y), config);
}

MiEstimate ksg_mi(std::span<const double> x, std::span<const double> y, const EstimatorConfig& config) {
  return ksg_mi(as_column(x), y, config);
}

MiEstimate histogram_mi(const Matrix& x, std::span<const double> y, const EstimatorConfig& config) {
  const Sample s = make_sample(x, y);
  config.validate(s.n);
  const std::size_t n = s.n;
  if (s.degenerate) return zero_estimate(n, 0);

  const std::vector<std::size_t> xc = cell_ids(x, config.bins);
  const std::vector<std::size_t> yc = bin_column(y, config.bins);
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> joint;
  std::map<std::size_t, std::size_t> mx;
  std::map<std::size_t, std::size_t> my;
  for (std::size_t i = 0; i < n; ++i) {
    ++joint[{xc[i], yc[i]}];
    ++mx[xc[i]];
    ++my[yc[i]];
  }
  MiEstimate out;
  out.samples = n;
  out.per_sample.resize(n);
  const double total = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pxy = static_cast<double>(joint[{xc[i], yc[i]}]);
    const double product = static_cast<double>(mx[xc[i]]) * static_cast<double>(my[yc[i]]);
    out.per_sample[i] = std::log(pxy * total / product);
  }
  out.value = mean(out.per_sample);
  return out;
}

MiEstimate histogram_mi(std::span<const double> x, std::span<const double> y,
                        const EstimatorConfig& config) {
  return histogram_mi(as_column(x), y, config);
}

MiEstimate estimate_mi(const Matrix& x, std::span<const double> y, const EstimatorConfig& config) {
  return config.kind == EstimatorKind::ksg ? ksg_mi(x, y, config) : histogram_mi(x, y, config);
}

MiEstimate estimate_mi(std::span<const double> x, std::span<const double> y,
                       const EstimatorConfig& config) {
  return estimate_mi(as_column(x), y, config);
}

double pmi_per_sample(std::span<const double> x, std::span<const double> y, std::size_t i,
                      const EstimatorConfig& config) {
  if (i >= x.size()) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("sample index {} out of range for {} samples", i, x.size()));
  }
  if (config.kind == EstimatorKind::histogram) return histogram_mi(x, y, config).per_sample[i];
  Sample s = make_sample(as_column(x), y);
  config.validate(s.n);
  if (s.degenerate) return 0.0;
  apply_jitter(s, config.k, config.rng_seed);
  Scratch scratch;
  return ksg_point(s, i, config.k, scratch);
}

Matrix pairwise_mi(const Matrix& inputs, const EstimatorConfig& config) {
  const std::size_t n = inputs.cols();
  Matrix out(n, n);
  std::vector<std::vector<double>> columns;
  for (std::size_t c = 0; c < n; ++c) columns.push_back(inputs.column(c));
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  parallel_for(pairs.size(), [&](std::size_t t) {
    const auto [i, j] = pairs[t];
    const double value = estimate_mi(columns[i], columns[j], config).value;
    out(i, j) = value;
    out(j, i) = value;
  });
  return out;
}

double redundancy_sum(const Matrix& pairwise, std::size_t feature, RelevanceMode mode) {
  if (feature >= pairwise.rows()) {
    throw Error(ErrorKind::invalid_argument, fmt::format("feature {} out of range", feature));
  }
  const std::size_t end = mode == RelevanceMode::literal ? feature : pairwise.cols();
  double total = 0.0;
  for (std::size_t j = 0; j < end; ++j) {
    if (j != feature) total += pairwise(feature, j);
  }
  return total;
}

NifTerms nif_feature(const Matrix& inputs, std::size_t feature, std::span<const double> target,
                     const EstimatorConfig& config) {
  if (feature >= inputs.cols()) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("feature {} out of range for {} inputs", feature, inputs.cols()));
  }
  NifTerms terms;
  const std::vector<double> xi = inputs.column(feature);
  terms.relevance = config.relevance_mode == RelevanceMode::literal
                        ? estimate_mi(inputs, target, config).value
                        : estimate_mi(xi, target, config).value;
  const std::size_t end = config.relevance_mode == RelevanceMode::literal ? feature : inputs.cols();
  for (std::size_t j = 0; j < end; ++j) {
    if (j == feature) continue;
    // Same argument order as pairwise_mi so both routes agree bit for bit.
    const std::size_t lo = std::min(j, feature);
    const std::size_t hi = std::max(j, feature);
    terms.redundancy += estimate_mi(inputs.column(lo), inputs.column(hi), config).value;
  }
  // A constant target carries no information, so nothing flows into it
  // regardless of how redundant the inputs are with each other.
  const bool silent = std::adjacent_find(target.begin(), target.end(), std::not_equal_to<>()) == target.end();
  terms.value = silent ? 0.0 : terms.relevance - config.beta * terms.redundancy;
  return terms;
}

NifTerms nif_feature(const ActivationRecord& activations, std::size_t feature, std::size_t layer,
                     std::size_t unit, const EstimatorConfig& config) {
  if (layer == 0 || layer >= activations.layers.size()) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("target layer {} must be in [1, {})", layer, activations.layers.size()));
  }
  const Matrix& units = activations.layers[layer].units;
  if (unit >= units.cols()) {
    throw Error(ErrorKind::invalid_argument,
                fmt::format("unit {} out of range for layer {} ({} units)", unit, layer, units.cols()));
  }
  return nif_feature(activations.layers[0].units, feature, units.column(unit), config);
}

}  // namespace nifflow
