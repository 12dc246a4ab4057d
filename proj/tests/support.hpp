// Shared helpers for the unit and acceptance tests: seeded generators,
// small model builders, the bundled Iris split and a tiny Adam trainer that
// stands in for the Python fixture pipeline.
#ifndef NIFFLOW_TESTS_SUPPORT_HPP
#define NIFFLOW_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nifflow/matrix.hpp"
#include "nifflow/model_io.hpp"

namespace testing {

using nifflow::Activation;
using nifflow::Dataset;
using nifflow::Layer;
using nifflow::LayerKind;
using nifflow::Matrix;
using nifflow::ModelGraph;
using nifflow::TensorShape;

inline std::filesystem::path data_dir() { return NIFFLOW_TEST_DATA_DIR; }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

/// Fresh directory under the build tree's temp location, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("nifflow-test-" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ignored;
    std::filesystem::remove_all(path_, ignored);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline Layer dense_layer(Matrix weights, std::vector<double> bias, Activation activation) {
  Layer layer;
  layer.kind = LayerKind::dense;
  layer.activation = activation;
  layer.weights = std::move(weights);
  layer.bias = std::move(bias);
  return layer;
}

/// Dense ReLU network with the given widths; the last layer is identity.
inline ModelGraph random_dense_model(const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    layers.push_back(dense_layer(random_matrix(widths[l + 1], widths[l], rng),
                                 random_vector(widths[l + 1], rng, -0.2, 0.2),
                                 last ? Activation::identity : Activation::relu));
  }
  return ModelGraph(TensorShape{widths.front()}, widths.back(), std::move(layers));
}

/// Labels each row by the argmax of the model's logits, so the model is
/// perfectly accurate on the result.
inline Dataset labelled_by_model(const ModelGraph& model, Matrix features) {
  Dataset data;
  const Matrix out = nifflow::logits(model, features);
  for (std::size_t s = 0; s < out.rows(); ++s) data.labels.push_back(static_cast<int>(nifflow::argmax(out.row(s))));
  data.features = std::move(features);
  for (std::size_t i = 0; i < data.features.cols(); ++i) data.feature_names.push_back("x" + std::to_string(i));
  return data;
}

inline Dataset load_iris(const std::string& split) {
  return nifflow::load_dataset(data_dir() / ("iris_" + split + ".csv"));
}

// ---------------------------------------------------------------------------
// Iris MLP trainer: 4-8-5-3, ReLU hidden layers, softmax output, full-batch
// Adam on standardized inputs. The standardization is folded into the first
// layer before export so the model consumes raw measurements.

struct DenseParams {
  Matrix w;
  std::vector<double> b;
};

inline ModelGraph train_mlp(const Dataset& train, const std::vector<std::size_t>& hidden, std::uint64_t seed,
                            int epochs = 1500, double learning_rate = 0.01) {
  const std::size_t n = train.size();
  const std::size_t d = train.features.cols();
  const std::size_t classes =
      static_cast<std::size_t>(*std::max_element(train.labels.begin(), train.labels.end())) + 1;

  std::vector<double> mean(d, 0.0);
  std::vector<double> scale(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < d; ++i) mean[i] += train.features(s, i) / static_cast<double>(n);
  }
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < d; ++i) {
      const double dev = train.features(s, i) - mean[i];
      scale[i] += dev * dev / static_cast<double>(n);
    }
  }
  for (double& v : scale) v = std::sqrt(v) > 0.0 ? std::sqrt(v) : 1.0;
  Matrix x(n, d);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < d; ++i) x(s, i) = (train.features(s, i) - mean[i]) / scale[i];
  }

  std::vector<std::size_t> widths{d};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(classes);
  const std::size_t depth = widths.size() - 1;

  std::mt19937_64 rng(seed);
  std::vector<DenseParams> params(depth);
  std::vector<DenseParams> m1(depth);
  std::vector<DenseParams> m2(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / static_cast<double>(widths[l])));
    params[l].w = Matrix(widths[l + 1], widths[l]);
    for (double& v : params[l].w.data()) v = init(rng);
    params[l].b.assign(widths[l + 1], 0.0);
    m1[l] = DenseParams{Matrix(widths[l + 1], widths[l]), std::vector<double>(widths[l + 1], 0.0)};
    m2[l] = m1[l];
  }

  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  std::vector<Matrix> acts(depth + 1);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    acts[0] = x;
    for (std::size_t l = 0; l < depth; ++l) {
      Matrix next(n, widths[l + 1]);
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < widths[l + 1]; ++j) {
          double acc = params[l].b[j];
          for (std::size_t i = 0; i < widths[l]; ++i) acc += params[l].w(j, i) * acts[l](s, i);
          next(s, j) = (l + 1 < depth && acc < 0.0) ? 0.0 : acc;
        }
      }
      acts[l + 1] = std::move(next);
    }
    // Softmax cross-entropy gradient with respect to the logits.
    Matrix delta(n, classes);
    for (std::size_t s = 0; s < n; ++s) {
      const auto row = acts[depth].row(s);
      const double peak = *std::max_element(row.begin(), row.end());
      double total = 0.0;
      for (std::size_t c = 0; c < classes; ++c) total += std::exp(row[c] - peak);
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = std::exp(row[c] - peak) / total;
        delta(s, c) = (p - (static_cast<int>(c) == train.labels[s] ? 1.0 : 0.0)) / static_cast<double>(n);
      }
    }
    for (std::size_t l = depth; l-- > 0;) {
      Matrix grad_w(widths[l + 1], widths[l]);
      std::vector<double> grad_b(widths[l + 1], 0.0);
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < widths[l + 1]; ++j) {
          grad_b[j] += delta(s, j);
          for (std::size_t i = 0; i < widths[l]; ++i) grad_w(j, i) += delta(s, j) * acts[l](s, i);
        }
      }
      if (l > 0) {
        Matrix prev(n, widths[l]);
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t i = 0; i < widths[l]; ++i) {
            if (acts[l](s, i) <= 0.0) continue;
            double acc = 0.0;
            for (std::size_t j = 0; j < widths[l + 1]; ++j) acc += delta(s, j) * params[l].w(j, i);
            prev(s, i) = acc;
          }
        }
        delta = std::move(prev);
      }
      const double c1 = 1.0 - std::pow(beta1, epoch);
      const double c2 = 1.0 - std::pow(beta2, epoch);
      auto step = [&](double& p, double& a, double& b, double g) {
        a = beta1 * a + (1.0 - beta1) * g;
        b = beta2 * b + (1.0 - beta2) * g * g;
        p -= learning_rate * (a / c1) / (std::sqrt(b / c2) + eps);
      };
      for (std::size_t k = 0; k < grad_w.data().size(); ++k) {
        step(params[l].w.data()[k], m1[l].w.data()[k], m2[l].w.data()[k], grad_w.data()[k]);
      }
      for (std::size_t k = 0; k < grad_b.size(); ++k) step(params[l].b[k], m1[l].b[k], m2[l].b[k], grad_b[k]);
    }
  }

  // Fold (x - mean) / scale into the first layer.
  DenseParams& first = params[0];
  for (std::size_t j = 0; j < widths[1]; ++j) {
    for (std::size_t i = 0; i < d; ++i) {
      first.w(j, i) /= scale[i];
      first.b[j] -= first.w(j, i) * mean[i];
    }
  }
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < depth; ++l) {
    layers.push_back(dense_layer(params[l].w, params[l].b, l + 1 < depth ? Activation::relu : Activation::softmax));
  }
  return ModelGraph(TensorShape{d}, classes, std::move(layers));
}

inline ModelGraph iris_mlp() { return train_mlp(load_iris("train"), {8, 5}, 7); }

}  // namespace testing

#endif  // NIFFLOW_TESTS_SUPPORT_HPP
