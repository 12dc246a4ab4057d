#ifndef NIFFLOW_MODEL_IO_HPP
#define NIFFLOW_MODEL_IO_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nifflow/matrix.hpp"

namespace nifflow {

enum class LayerKind { dense, conv2d, flatten };
enum class Activation { identity, relu, softmax };

std::string_view to_string(LayerKind kind) noexcept;
std::string_view to_string(Activation activation) noexcept;

/// Shape of the value flowing between layers. A flat vector has
/// `spatial == false` and its length in `channels`.
struct TensorShape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;
  bool spatial = false;

  std::size_t size() const noexcept { return channels * height * width; }
  bool operator==(const TensorShape&) const = default;
};

/// Convolution weights, out_channels x in_channels x height x width, row-major.
struct ConvKernel {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t o, std::size_t i, std::size_t r, std::size_t c) const {
    return values[((o * in_channels + i) * height + r) * width + c];
  }
  double& at(std::size_t o, std::size_t i, std::size_t r, std::size_t c) {
    return values[((o * in_channels + i) * height + r) * width + c];
  }
};

struct Layer {
  LayerKind kind = LayerKind::dense;
  Activation activation = Activation::identity;
  Matrix weights;       // dense: out x in
  ConvKernel kernel;    // conv2d
  std::vector<double> bias;
  std::size_t stride = 1;  // conv2d, valid padding only
};

/// Validated layered feedforward model. Construction checks every shape
/// invariant and throws Error{shape_mismatch} naming the offending layer.
class ModelGraph {
 public:
  ModelGraph(TensorShape input_shape, std::size_t class_count, std::vector<Layer> layers);

  const TensorShape& input_shape() const noexcept { return input_shape_; }
  std::size_t class_count() const noexcept { return class_count_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  /// Output shape of layer i.
  const TensorShape& output_shape(std::size_t i) const { return output_shapes_.at(i); }
  bool is_convolutional() const noexcept;

  /// Layers that become NIF layers: every layer except flatten. NIF layer 0
  /// is the input; NIF layer l (l >= 1) is model layer nif_layers()[l - 1].
  const std::vector<std::size_t>& nif_layers() const noexcept { return nif_layers_; }
  /// Unit counts per NIF layer (input features first; conv layers count channels).
  std::vector<std::size_t> nif_layer_sizes() const;

  /// 16 hex digits of FNV-1a over the canonical serialization.
  std::string fingerprint() const;

 private:
  TensorShape input_shape_;
  std::size_t class_count_;
  std::vector<Layer> layers_;
  std::vector<TensorShape> output_shapes_;
  std::vector<std::size_t> nif_layers_;
};

/// Model document: {input_shape, class_count, layers:[{kind, activation,
/// stride?, padding?, weights, bias}]}. input_shape is [n] for dense models and
/// [height, width, channels] for image models.
ModelGraph parse_model(std::string_view text);
ModelGraph load_model(const std::filesystem::path& path);
std::string serialize_model(const ModelGraph& model);

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  bool operator==(const ImageShape&) const = default;
};

struct Dataset {
  Matrix features;  // N x n; images flattened row-major over (h, w, ch)
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  std::optional<ImageShape> image_shape;

  std::size_t size() const noexcept { return labels.size(); }
};

/// CSV with a header row and one column named `label`.
Dataset parse_dataset_csv(std::string_view text);
/// Loads the CSV and, when `<stem>.meta.json` sits beside it, the image_shape.
Dataset load_dataset(const std::filesystem::path& path);
std::string dataset_to_csv(const Dataset& dataset);

/// Throws when labels fall outside [0, class_count) or the feature width does
/// not match the model input.
void check_compatible(const ModelGraph& model, const Dataset& dataset);

struct LayerActivations {
  std::size_t model_layer = 0;  // meaningless for the input layer
  Matrix units;                 // N x units; channel means for conv layers
  std::optional<TensorShape> spatial;
  Matrix raw;  // conv only: N x (channels * height * width), channel-major
};

/// Activations at every NIF layer; layers[0] is the input.
struct ActivationRecord {
  std::vector<LayerActivations> layers;
  Matrix logits;  // final-layer pre-activation, N x class_count

  std::size_t samples() const noexcept { return logits.rows(); }
};

ActivationRecord forward(const ModelGraph& model, const Matrix& features);
ActivationRecord forward(const ModelGraph& model, const Dataset& dataset);

/// Final-layer pre-activations only.
Matrix logits(const ModelGraph& model, const Matrix& features);

/// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const double> values);

double predict_accuracy(const ModelGraph& model, const Dataset& dataset);

}  // namespace nifflow

#endif  // NIFFLOW_MODEL_IO_HPP
