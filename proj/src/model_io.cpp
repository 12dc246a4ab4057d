#include "nifflow/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "nifflow/error.hpp"
#include "nifflow/hash.hpp"
#include "nifflow/parallel.hpp"

namespace nifflow {

using nlohmann::json;

std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

std::string_view to_string(Activation activation) noexcept {
  switch (activation) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
  }
  return "unknown";
}

namespace {

[[noreturn]] void shape_error(std::size_t layer, const std::string& what) {
  throw Error(ErrorKind::shape_mismatch, fmt::format("layer {}: {}", layer, what));
}

std::string shape_text(const TensorShape& s) {
  if (!s.spatial) return fmt::format("[{}]", s.channels);
  return fmt::format("[{}x{}x{}]", s.channels, s.height, s.width);
}

}  // namespace

ModelGraph::ModelGraph(TensorShape input_shape, std::size_t class_count, std::vector<Layer> layers)
    : input_shape_(input_shape), class_count_(class_count), layers_(std::move(layers)) {
  if (class_count_ == 0) throw Error(ErrorKind::shape_mismatch, "class_count must be positive");
  if (input_shape_.size() == 0) throw Error(ErrorKind::shape_mismatch, "input_shape is empty");
  if (layers_.empty()) throw Error(ErrorKind::shape_mismatch, "model has no layers");

  TensorShape current = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    if (layer.activation == Activation::softmax && i + 1 != layers_.size()) {
      shape_error(i, "softmax is only permitted on the final layer");
    }
    switch (layer.kind) {
      case LayerKind::dense: {
        if (current.spatial) {
          shape_error(i, fmt::format("dense layer needs a flat input, got {} (insert flatten)",
                                     shape_text(current)));
        }
        if (layer.weights.cols() != current.channels) {
          shape_error(i, fmt::format("expected input dim {}, got weights with in-dim {}",
                                     current.channels, layer.weights.cols()));
        }
        if (layer.weights.rows() == 0) shape_error(i, "dense layer has no output units");
        if (layer.bias.size() != layer.weights.rows()) {
          shape_error(i, fmt::format("bias length {} does not match out-dim {}", layer.bias.size(),
                                     layer.weights.rows()));
        }
        current = TensorShape{layer.weights.rows(), 1, 1, false};
        break;
      }
      case LayerKind::conv2d: {
        const ConvKernel& k = layer.kernel;
        if (!current.spatial) {
          shape_error(i, fmt::format("conv2d needs a spatial input, got {}", shape_text(current)));
        }
        if (k.in_channels != current.channels) {
          shape_error(i, fmt::format("expected {} input channels, got kernel with {}",
                                     current.channels, k.in_channels));
        }
        if (k.out_channels == 0 || k.height == 0 || k.width == 0) {
          shape_error(i, "conv2d kernel has an empty dimension");
        }
        if (k.values.size() != k.out_channels * k.in_channels * k.height * k.width) {
          shape_error(i, "conv2d kernel values do not match its dimensions");
        }
        if (layer.stride == 0) shape_error(i, "conv2d stride must be positive");
        if (k.height > current.height || k.width > current.width) {
          shape_error(i, fmt::format("kernel {}x{} larger than input {}x{}", k.height, k.width,
                                     current.height, current.width));
        }
        if (layer.bias.size() != k.out_channels) {
          shape_error(i, fmt::format("bias length {} does not match {} output channels",
                                     layer.bias.size(), k.out_channels));
        }
        if (layer.activation == Activation::softmax) shape_error(i, "conv2d cannot use softmax");
        current = TensorShape{k.out_channels, (current.height - k.height) / layer.stride + 1,
                              (current.width - k.width) / layer.stride + 1, true};
        break;
      }
      case LayerKind::flatten: {
        if (layer.activation != Activation::identity) shape_error(i, "flatten takes no activation");
        current = TensorShape{current.size(), 1, 1, false};
        break;
      }
    }
    output_shapes_.push_back(current);
    if (layer.kind != LayerKind::flatten) nif_layers_.push_back(i);
  }

  const std::size_t last = layers_.size() - 1;
  if (layers_.back().kind != LayerKind::dense) shape_error(last, "final layer must be dense");
  if (current.channels != class_count_) {
    shape_error(last, fmt::format("final out-dim {} does not equal class_count {}",
                                  current.channels, class_count_));
  }
}

bool ModelGraph::is_convolutional() const noexcept {
  return std::any_of(layers_.begin(), layers_.end(),
                     [](const Layer& l) { return l.kind == LayerKind::conv2d; });
}

std::vector<std::size_t> ModelGraph::nif_layer_sizes() const {
  std::vector<std::size_t> sizes{input_shape_.size()};
  for (std::size_t index : nif_layers_) sizes.push_back(output_shapes_[index].channels);
  return sizes;
}

std::string ModelGraph::fingerprint() const {
  return fnv1a_hex(serialize_model(*this));
}

namespace {

Activation parse_activation(const std::string& name, std::size_t layer) {
  if (name == "relu") return Activation::relu;
  if (name == "softmax") return Activation::softmax;
  if (name == "identity" || name == "linear" || name == "none") return Activation::identity;
  throw Error(ErrorKind::parse, fmt::format("layer {}: unknown activation '{}'", layer, name));
}

std::vector<double> to_vector(const json& node) {
  std::vector<double> out;
  out.reserve(node.size());
  for (const json& v : node) {
    if (!v.is_number()) throw Error(ErrorKind::parse, "expected a number in weight array");
    out.push_back(v.get<double>());
  }
  return out;
}

Layer parse_layer(const json& node, std::size_t index) {
  if (!node.is_object()) throw Error(ErrorKind::parse, fmt::format("layer {}: not an object", index));
  Layer layer;
  const std::string kind = node.value("kind", std::string{});
  layer.activation = parse_activation(node.value("activation", std::string{"identity"}), index);
  if (kind == "flatten") {
    layer.kind = LayerKind::flatten;
    return layer;
  }
  if (!node.contains("weights") || !node.contains("bias")) {
    throw Error(ErrorKind::parse, fmt::format("layer {}: missing weights or bias", index));
  }
  layer.bias = to_vector(node.at("bias"));
  const json& w = node.at("weights");
  if (kind == "dense") {
    layer.kind = LayerKind::dense;
    const std::size_t rows = w.size();
    const std::size_t cols = rows == 0 ? 0 : w.at(0).size();
    layer.weights = Matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!w[r].is_array() || w[r].size() != cols) {
        throw Error(ErrorKind::parse, fmt::format("layer {}: ragged weight row {}", index, r));
      }
      for (std::size_t c = 0; c < cols; ++c) layer.weights(r, c) = w[r][c].get<double>();
    }
    return layer;
  }
  if (kind == "conv2d") {
    layer.kind = LayerKind::conv2d;
    layer.stride = node.value("stride", std::size_t{1});
    const std::string padding = node.value("padding", std::string{"valid"});
    if (padding != "valid") {
      throw Error(ErrorKind::unsupported,
                  fmt::format("layer {}: padding '{}' unsupported (valid only)", index, padding));
    }
    ConvKernel& k = layer.kernel;
    k.out_channels = w.size();
    k.in_channels = k.out_channels ? w.at(0).size() : 0;
    k.height = k.in_channels ? w.at(0).at(0).size() : 0;
    k.width = k.height ? w.at(0).at(0).at(0).size() : 0;
    k.values.reserve(k.out_channels * k.in_channels * k.height * k.width);
    for (const json& o : w) {
      if (o.size() != k.in_channels) throw Error(ErrorKind::parse, fmt::format("layer {}: ragged kernel", index));
      for (const json& i : o) {
        if (i.size() != k.height) throw Error(ErrorKind::parse, fmt::format("layer {}: ragged kernel", index));
        for (const json& r : i) {
          if (r.size() != k.width) throw Error(ErrorKind::parse, fmt::format("layer {}: ragged kernel", index));
          for (const json& v : r) k.values.push_back(v.get<double>());
        }
      }
    }
    return layer;
  }
  throw Error(ErrorKind::parse, fmt::format("layer {}: unknown kind '{}'", index, kind));
}

}  // namespace

ModelGraph parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, fmt::format("model document: {}", e.what()));
  }
  try {
    if (!doc.is_object()) throw Error(ErrorKind::parse, "model document must be an object");
    const std::vector<std::size_t> dims = doc.at("input_shape").get<std::vector<std::size_t>>();
    TensorShape input;
    if (dims.size() == 1) {
      input = TensorShape{dims[0], 1, 1, false};
    } else if (dims.size() == 3) {
      input = TensorShape{dims[2], dims[0], dims[1], true};
    } else {
      throw Error(ErrorKind::parse, "input_shape must be [n] or [height, width, channels]");
    }
    const auto class_count = doc.at("class_count").get<std::size_t>();
    std::vector<Layer> layers;
    const json& list = doc.at("layers");
    for (std::size_t i = 0; i < list.size(); ++i) layers.push_back(parse_layer(list[i], i));
    return ModelGraph(input, class_count, std::move(layers));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, fmt::format("model document: {}", e.what()));
  }
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

ModelGraph load_model(const std::filesystem::path& path) {
  try {
    return parse_model(read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string serialize_model(const ModelGraph& model) {
  json doc;
  const TensorShape& in = model.input_shape();
  doc["input_shape"] = in.spatial ? json{in.height, in.width, in.channels} : json{in.channels};
  doc["class_count"] = model.class_count();
  json layers = json::array();
  for (const Layer& layer : model.layers()) {
    json node;
    node["kind"] = to_string(layer.kind);
    node["activation"] = to_string(layer.activation);
    if (layer.kind == LayerKind::dense) {
      json rows = json::array();
      for (std::size_t r = 0; r < layer.weights.rows(); ++r) {
        const auto row = layer.weights.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
      }
      node["weights"] = rows;
      node["bias"] = layer.bias;
    } else if (layer.kind == LayerKind::conv2d) {
      const ConvKernel& k = layer.kernel;
      json outs = json::array();
      for (std::size_t o = 0; o < k.out_channels; ++o) {
        json ins = json::array();
        for (std::size_t i = 0; i < k.in_channels; ++i) {
          json rows = json::array();
          for (std::size_t r = 0; r < k.height; ++r) {
            json row = json::array();
            for (std::size_t c = 0; c < k.width; ++c) row.push_back(k.at(o, i, r, c));
            rows.push_back(row);
          }
          ins.push_back(rows);
        }
        outs.push_back(ins);
      }
      node["stride"] = layer.stride;
      node["padding"] = "valid";
      node["weights"] = outs;
      node["bias"] = layer.bias;
    }
    layers.push_back(node);
  }
  doc["layers"] = layers;
  return doc.dump();
}

// ---------------------------------------------------------------------------
// datasets

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
      cell.remove_suffix(1);
    }
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    cells.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (cell.empty() || used != cell.size() || !std::isfinite(value)) {
    throw Error(ErrorKind::parse,
                fmt::format("line {}: column '{}' has non-numeric or missing value '{}'", line, column, cell));
  }
  return value;
}

}  // namespace

Dataset parse_dataset_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() != '#') lines.push_back(line);
    start = end + 1;
  }
  if (lines.empty()) throw Error(ErrorKind::parse, "dataset: missing header row");

  const std::vector<std::string> header = split_csv_line(lines[0]);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw Error(ErrorKind::parse, "dataset: no 'label' column");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  Dataset dataset;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_col) dataset.feature_names.push_back(header[c]);
  }
  const std::size_t n_rows = lines.size() - 1;
  if (n_rows == 0) throw Error(ErrorKind::parse, "dataset: no samples");
  dataset.features = Matrix(n_rows, header.size() - 1);
  dataset.labels.reserve(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) {
    const std::vector<std::string> cells = split_csv_line(lines[r + 1]);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::parse, fmt::format("line {}: expected {} cells, got {}", r + 2,
                                                header.size(), cells.size()));
    }
    std::size_t f = 0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double value = parse_number(cells[c], r + 2, header[c]);
      if (c == label_col) {
        if (value != std::floor(value) || value < 0) {
          throw Error(ErrorKind::parse, fmt::format("line {}: label '{}' is not a class index", r + 2, cells[c]));
        }
        dataset.labels.push_back(static_cast<int>(value));
      } else {
        dataset.features(r, f++) = value;
      }
    }
  }
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path) {
  Dataset dataset;
  try {
    dataset = parse_dataset_csv(read_file(path));
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("{}: {}", path.string(), e.what()));
  }
  std::filesystem::path meta = path;
  meta.replace_extension(".meta.json");
  if (std::filesystem::exists(meta)) {
    try {
      const json doc = json::parse(read_file(meta));
      if (doc.contains("image_shape")) {
        const auto dims = doc.at("image_shape").get<std::vector<std::size_t>>();
        if (dims.size() != 3) throw Error(ErrorKind::parse, "image_shape must be [height, width, channels]");
        dataset.image_shape = ImageShape{dims[0], dims[1], dims[2]};
        if (dims[0] * dims[1] * dims[2] != dataset.features.cols()) {
          throw Error(ErrorKind::shape_mismatch,
                      fmt::format("image_shape {}x{}x{} does not match {} feature columns", dims[0],
                                  dims[1], dims[2], dataset.features.cols()));
        }
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, fmt::format("{}: {}", meta.string(), e.what()));
    }
  }
  return dataset;
}

std::string dataset_to_csv(const Dataset& dataset) {
  std::string out;
  for (std::size_t c = 0; c < dataset.features.cols(); ++c) {
    out += c < dataset.feature_names.size() ? dataset.feature_names[c] : fmt::format("x{}", c);
    out += ',';
  }
  out += "label\n";
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    for (double v : dataset.features.row(r)) out += fmt::format("{},", v);
    out += fmt::format("{}\n", dataset.labels[r]);
  }
  return out;
}

void check_compatible(const ModelGraph& model, const Dataset& dataset) {
  if (dataset.size() == 0) throw Error(ErrorKind::invalid_argument, "dataset is empty");
  if (dataset.features.rows() != dataset.labels.size()) {
    throw Error(ErrorKind::shape_mismatch, "dataset feature rows and labels differ in count");
  }
  if (dataset.features.cols() != model.input_shape().size()) {
    throw Error(ErrorKind::shape_mismatch,
                fmt::format("dataset has {} features, model expects {}", dataset.features.cols(),
                            model.input_shape().size()));
  }
  for (std::size_t i = 0; i < dataset.labels.size(); ++i) {
    const int label = dataset.labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= model.class_count()) {
      throw Error(ErrorKind::invalid_argument,
                  fmt::format("sample {}: label {} outside [0, {})", i, label, model.class_count()));
    }
  }
}

// ---------------------------------------------------------------------------
// forward pass

namespace {

void apply_activation(Activation activation, std::span<double> values) {
  switch (activation) {
    case Activation::identity: break;
    case Activation::relu:
      for (double& v : values) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::softmax: {
      const double peak = *std::max_element(values.begin(), values.end());
      double total = 0.0;
      for (double& v : values) {
        v = std::exp(v - peak);
        total += v;
      }
      for (double& v : values) v /= total;
      break;
    }
  }
}

/// Converts one sample from (h, w, ch) row-major feature order to channel-major.
std::vector<double> image_to_channel_major(std::span<const double> row, const TensorShape& shape) {
  std::vector<double> out(shape.size());
  for (std::size_t r = 0; r < shape.height; ++r) {
    for (std::size_t c = 0; c < shape.width; ++c) {
      for (std::size_t ch = 0; ch < shape.channels; ++ch) {
        out[(ch * shape.height + r) * shape.width + c] = row[(r * shape.width + c) * shape.channels + ch];
      }
    }
  }
  return out;
}

std::vector<double> conv_forward(const Layer& layer, const std::vector<double>& input,
                                 const TensorShape& in_shape, const TensorShape& out_shape) {
  const ConvKernel& k = layer.kernel;
  std::vector<double> out(out_shape.size());
  for (std::size_t o = 0; o < k.out_channels; ++o) {
    for (std::size_t r = 0; r < out_shape.height; ++r) {
      for (std::size_t c = 0; c < out_shape.width; ++c) {
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < k.in_channels; ++i) {
          for (std::size_t kr = 0; kr < k.height; ++kr) {
            const std::size_t row = r * layer.stride + kr;
            for (std::size_t kc = 0; kc < k.width; ++kc) {
              const std::size_t col = c * layer.stride + kc;
              acc += k.at(o, i, kr, kc) * input[(i * in_shape.height + row) * in_shape.width + col];
            }
          }
        }
        out[(o * out_shape.height + r) * out_shape.width + c] = acc;
      }
    }
  }
  return out;
}

}  // namespace

ActivationRecord forward(const ModelGraph& model, const Matrix& features) {
  if (features.cols() != model.input_shape().size()) {
    throw Error(ErrorKind::shape_mismatch,
                fmt::format("input has {} features, model expects {}", features.cols(),
                            model.input_shape().size()));
  }
  const std::size_t n = features.rows();
  const auto& layers = model.layers();

  ActivationRecord record;
  record.layers.resize(model.nif_layers().size() + 1);
  record.layers[0].units = features;
  for (std::size_t l = 0; l < model.nif_layers().size(); ++l) {
    LayerActivations& slot = record.layers[l + 1];
    slot.model_layer = model.nif_layers()[l];
    const TensorShape& shape = model.output_shape(slot.model_layer);
    slot.units = Matrix(n, shape.channels);
    if (shape.spatial) {
      slot.spatial = shape;
      slot.raw = Matrix(n, shape.size());
    }
  }
  record.logits = Matrix(n, model.class_count());

  parallel_for(n, [&](std::size_t s) {
    TensorShape shape = model.input_shape();
    std::vector<double> value = shape.spatial ? image_to_channel_major(features.row(s), shape)
                                              : std::vector<double>(features.row(s).begin(), features.row(s).end());
    std::size_t nif_index = 1;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const Layer& layer = layers[li];
      const TensorShape& out_shape = model.output_shape(li);
      if (layer.kind == LayerKind::flatten) {
        shape = out_shape;
        continue;
      }
      std::vector<double> next;
      if (layer.kind == LayerKind::dense) {
        next.resize(layer.weights.rows());
        for (std::size_t j = 0; j < next.size(); ++j) {
          double acc = layer.bias[j];
          const auto w = layer.weights.row(j);
          for (std::size_t i = 0; i < value.size(); ++i) acc += w[i] * value[i];
          next[j] = acc;
        }
      } else {
        next = conv_forward(layer, value, shape, out_shape);
      }
      if (li + 1 == layers.size()) std::copy(next.begin(), next.end(), record.logits.row(s).begin());
      apply_activation(layer.activation, next);

      LayerActivations& slot = record.layers[nif_index++];
      if (out_shape.spatial) {
        std::copy(next.begin(), next.end(), slot.raw.row(s).begin());
        const std::size_t plane = out_shape.height * out_shape.width;
        for (std::size_t ch = 0; ch < out_shape.channels; ++ch) {
          double total = 0.0;
          for (std::size_t p = 0; p < plane; ++p) total += next[ch * plane + p];
          slot.units(s, ch) = total / static_cast<double>(plane);
        }
      } else {
        std::copy(next.begin(), next.end(), slot.units.row(s).begin());
      }
      value = std::move(next);
      shape = out_shape;
    }
  });
  return record;
}

ActivationRecord forward(const ModelGraph& model, const Dataset& dataset) {
  check_compatible(model, dataset);
  return forward(model, dataset.features);
}

Matrix logits(const ModelGraph& model, const Matrix& features) {
  return forward(model, features).logits;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double predict_accuracy(const ModelGraph& model, const Dataset& dataset) {
  const ActivationRecord record = forward(model, dataset);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < dataset.size(); ++s) {
    if (argmax(record.logits.row(s)) == static_cast<std::size_t>(dataset.labels[s])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

}  // namespace nifflow
