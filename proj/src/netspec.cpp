#include "a3sim/netspec.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace a3 {

using nlohmann::json;

std::string_view to_string(StorageMode mode) {
  return mode == StorageMode::dual ? "dual" : "single";
}

StorageMode storage_mode_from_string(std::string_view text) {
  if (text == "dual") return StorageMode::dual;
  if (text == "single") return StorageMode::single;
  throw ParseError(fmt::format("unknown storage mode '{}'", text), "storage");
}

void CrossbarGeometry::validate() const {
  if (rows < 1 || cols < 1 || cell_bits < 1 || cells_per_weight < 1 || adc_bits < 1 ||
      dac_bits < 1)
    throw ShapeError("crossbar geometry fields must all be >= 1");
  if (cell_bits > 16 || weight_bits() > 32)
    throw ShapeError(fmt::format("unsupported weight width {} bits", weight_bits()));
  if (adc_bits > 40 || dac_bits > 16)
    throw ShapeError("converter width out of supported range");
  if (cols < cells_per_weight)
    throw ShapeError("a crossbar must hold at least one weight per row");
}

std::string_view to_string(LayerKind kind) {
  return kind == LayerKind::conv ? "conv" : "fully_connected";
}

std::string_view to_string(PoolKind kind) { return kind == PoolKind::max ? "max" : "avg"; }

Dims LayerSpec::conv_output() const {
  return {(input.height - kernel_h) / stride + 1, (input.width - kernel_w) / stride + 1,
          out_channels};
}

Dims LayerSpec::output() const {
  Dims out = conv_output();
  if (pool) {
    out.height /= 2;
    out.width /= 2;
  }
  return out;
}

void LayerSpec::validate() const {
  if (input.height < 1 || input.width < 1 || input.channels < 1)
    throw ShapeError("layer input dims must be >= 1");
  if (out_channels < 1) throw ShapeError("out_channels must be >= 1");
  if (stride < 1) throw ShapeError("stride must be >= 1");
  if (kernel_h < 1 || kernel_w < 1) throw ShapeError("kernel dims must be >= 1");
  if (kernel_h > input.height || kernel_w > input.width)
    throw ShapeError(fmt::format("kernel {}x{} exceeds input {}x{}", kernel_h, kernel_w,
                                 input.height, input.width));
  if (kind == LayerKind::fully_connected &&
      (kernel_h != input.height || kernel_w != input.width || stride != 1))
    throw ShapeError("fully connected layer must cover its whole input");
  if (pool) {
    Dims c = conv_output();
    if (c.height < 2 || c.width < 2)
      throw ShapeError(fmt::format("2x2 pooling needs a conv output of at least 2x2, got {}x{}",
                                   c.height, c.width));
  }
  if (replication && *replication < 1) throw ShapeError("replication must be >= 1");
}

std::int64_t NetworkSpec::num_classes() const {
  return layers.empty() ? 0 : layers.back().output().count();
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw ShapeError("network needs at least one layer");
  if (batch_size < 1) throw ShapeError("batch_size must be >= 1");
  Dims expected = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    if (!(layer.input == expected))
      throw ShapeError(fmt::format("layer {} input {}x{}x{} does not match previous output {}x{}x{}",
                                   i + 1, layer.input.height, layer.input.width,
                                   layer.input.channels, expected.height, expected.width,
                                   expected.channels));
    try {
      layer.validate();
    } catch (const ShapeError& e) {
      throw ShapeError(fmt::format("layer {}: {}", i + 1, e.what()));
    }
    expected = layer.output();
  }
  if (attack.target_label < 0 || attack.target_label >= num_classes())
    throw ShapeError(fmt::format("attack target_label {} outside [0, {})", attack.target_label,
                                 num_classes()));
  if (attack.lambda < 0) throw ShapeError("attack lambda must be >= 0");
  if (!(attack.learning_rate > 0)) throw ShapeError("attack learning_rate must be > 0");
  if (attack.iterations < 0) throw ShapeError("attack iterations must be >= 0");
}

NetworkSpec make_network(std::string name, Dims input, std::vector<LayerSpec> layers,
                         int batch_size, AttackConfig attack) {
  NetworkSpec net;
  net.name = std::move(name);
  net.input = input;
  net.batch_size = batch_size;
  net.attack = attack;
  Dims current = input;
  for (auto& layer : layers) {
    layer.input = current;
    if (layer.kind == LayerKind::fully_connected) {
      layer.kernel_h = current.height;
      layer.kernel_w = current.width;
      layer.stride = 1;
    }
    current = layer.output();
  }
  net.layers = std::move(layers);
  net.validate();
  return net;
}

// JSON ---------------------------------------------------------------------

namespace {

int line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + byte, '\n'));
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(fmt::format("{}: missing field '{}'", where, key), where + "." + key);
  return *it;
}

int as_count(const json& v, const std::string& field, int minimum) {
  if (!v.is_number_integer())
    throw ParseError(fmt::format("{}: expected an integer", field), field);
  auto x = v.get<std::int64_t>();
  if (x < minimum || x > (1 << 30))
    throw ParseError(fmt::format("{}: value {} out of range (min {})", field, x, minimum), field);
  return static_cast<int>(x);
}

double as_real(const json& v, const std::string& field) {
  if (!v.is_number()) throw ParseError(fmt::format("{}: expected a number", field), field);
  return v.get<double>();
}

Dims as_dims(const json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 3)
    throw ParseError(fmt::format("{}: expected [h, w, c]", field), field);
  return {as_count(v[0], field + "[0]", 1), as_count(v[1], field + "[1]", 1),
          as_count(v[2], field + "[2]", 1)};
}

}  // namespace

NetworkSpec parse_network(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("syntax error at line {}: {}", line_of(text, e.byte), e.what()),
                     "", line_of(text, e.byte));
  }
  if (!doc.is_object()) throw ParseError("network config must be a JSON object", "", 1);

  NetworkSpec net;
  if (auto it = doc.find("name"); it != doc.end()) {
    if (!it->is_string()) throw ParseError("name: expected a string", "name");
    net.name = it->get<std::string>();
  }
  net.batch_size = as_count(require(doc, "batch_size", "network"), "batch_size", 1);
  net.input = as_dims(require(doc, "input", "network"), "input");

  const json& layers = require(doc, "layers", "network");
  if (!layers.is_array() || layers.empty())
    throw ParseError("layers: expected a non-empty list", "layers");

  Dims current = net.input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& item = layers[i];
    const std::string where = fmt::format("layers[{}]", i);
    if (!item.is_object()) throw ParseError(where + ": expected an object", where);

    LayerSpec layer;
    const json& kind = require(item, "kind", where);
    if (!kind.is_string()) throw ParseError(where + ".kind: expected a string", where + ".kind");
    const auto kind_name = kind.get<std::string>();
    if (kind_name == "conv") {
      layer.kind = LayerKind::conv;
    } else if (kind_name == "fc" || kind_name == "fully_connected") {
      layer.kind = LayerKind::fully_connected;
    } else {
      throw ParseError(fmt::format("{}.kind: unknown layer kind '{}'", where, kind_name),
                       where + ".kind");
    }

    if (auto it = item.find("input"); it != item.end()) {
      Dims declared = as_dims(*it, where + ".input");
      if (!(declared == current))
        throw ShapeError(fmt::format("{}: declared input {}x{}x{} does not match chain {}x{}x{}",
                                     where, declared.height, declared.width, declared.channels,
                                     current.height, current.width, current.channels));
    }
    layer.input = current;
    layer.out_channels = as_count(require(item, "out_channels", where), where + ".out_channels", 1);
    layer.relu = false;
    if (auto it = item.find("relu"); it != item.end()) {
      if (!it->is_boolean()) throw ParseError(where + ".relu: expected a boolean", where + ".relu");
      layer.relu = it->get<bool>();
    }
    if (auto it = item.find("pool"); it != item.end() && !it->is_null()) {
      if (!it->is_string()) throw ParseError(where + ".pool: expected a string", where + ".pool");
      const auto p = it->get<std::string>();
      if (p == "max") {
        layer.pool = PoolKind::max;
      } else if (p == "avg") {
        layer.pool = PoolKind::avg;
      } else {
        throw ParseError(fmt::format("{}.pool: unknown pool kind '{}'", where, p), where + ".pool");
      }
    }
    if (auto it = item.find("replication"); it != item.end())
      layer.replication = as_count(*it, where + ".replication", 1);

    if (layer.kind == LayerKind::fully_connected) {
      layer.kernel_h = current.height;
      layer.kernel_w = current.width;
      layer.stride = 1;
      if (auto it = item.find("stride"); it != item.end() && as_count(*it, where + ".stride", 1) != 1)
        throw ShapeError(where + ": fully connected layer must have stride 1");
    } else {
      const json& kernel = require(item, "kernel", where);
      if (kernel.is_array() && kernel.size() == 2) {
        layer.kernel_h = as_count(kernel[0], where + ".kernel[0]", 1);
        layer.kernel_w = as_count(kernel[1], where + ".kernel[1]", 1);
      } else if (kernel.is_number_integer()) {
        layer.kernel_h = layer.kernel_w = as_count(kernel, where + ".kernel", 1);
      } else {
        throw ParseError(where + ".kernel: expected [kh, kw] or an integer", where + ".kernel");
      }
      layer.stride = 1;
      if (auto it = item.find("stride"); it != item.end())
        layer.stride = as_count(*it, where + ".stride", 1);
    }
    try {
      layer.validate();
    } catch (const ShapeError& e) {
      throw ShapeError(fmt::format("{}: {}", where, e.what()));
    }
    current = layer.output();
    net.layers.push_back(layer);
  }

  if (auto it = doc.find("attack"); it != doc.end()) {
    const json& a = *it;
    if (!a.is_object()) throw ParseError("attack: expected an object", "attack");
    if (auto f = a.find("target_label"); f != a.end())
      net.attack.target_label = as_count(*f, "attack.target_label", 0);
    if (auto f = a.find("lambda"); f != a.end()) net.attack.lambda = as_real(*f, "attack.lambda");
    if (auto f = a.find("learning_rate"); f != a.end())
      net.attack.learning_rate = as_real(*f, "attack.learning_rate");
    if (auto f = a.find("iterations"); f != a.end())
      net.attack.iterations = as_count(*f, "attack.iterations", 0);
  }

  net.validate();
  return net;
}

NetworkSpec load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open network config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str());
}

std::string emit_network(const NetworkSpec& net) {
  json doc = json::object();
  doc["name"] = net.name;
  doc["batch_size"] = net.batch_size;
  doc["input"] = {net.input.height, net.input.width, net.input.channels};
  json layers = json::array();
  for (const auto& layer : net.layers) {
    json item = json::object();
    item["kind"] = layer.kind == LayerKind::conv ? "conv" : "fc";
    if (layer.kind == LayerKind::conv) {
      item["kernel"] = {layer.kernel_h, layer.kernel_w};
      item["stride"] = layer.stride;
    }
    item["out_channels"] = layer.out_channels;
    item["relu"] = layer.relu;
    if (layer.pool) item["pool"] = std::string(to_string(*layer.pool));
    if (layer.replication) item["replication"] = *layer.replication;
    layers.push_back(std::move(item));
  }
  doc["layers"] = std::move(layers);
  doc["attack"] = {{"target_label", net.attack.target_label},
                   {"lambda", net.attack.lambda},
                   {"learning_rate", net.attack.learning_rate},
                   {"iterations", net.attack.iterations}};
  return doc.dump(2) + "\n";
}

// Resources ----------------------------------------------------------------

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

std::int64_t crossbar_requirement(const LayerSpec& layer, const CrossbarGeometry& geom,
                                  int replication, StorageMode mode) {
  const std::int64_t physical_cols = layer.matrix_cols() * geom.cells_per_weight;
  std::int64_t count = ceil_div(layer.matrix_rows(), geom.rows) *
                       ceil_div(physical_cols, geom.cols) * replication;
  return mode == StorageMode::dual ? 2 * count : count;
}

std::vector<int> neuron_durations(const NetworkSpec& net) {
  const int depth = static_cast<int>(net.depth());
  std::vector<int> out;
  out.reserve(net.depth());
  for (int l = 1; l <= depth; ++l) out.push_back(2 * (depth - l) + 1);
  return out;
}

BufferBreakdown buffer_breakdown(const NetworkSpec& net, BufferMode mode) {
  BufferBreakdown b;
  std::int64_t widest = 0;
  for (const auto& layer : net.layers) widest = std::max(widest, layer.conv_output().count());
  // One live error layer exists in both modes; EP is common to CNN training and the attack.
  b.error_bits = widest * kNeuronBits;

  if (mode == BufferMode::cnn_training) {
    const auto durations = neuron_durations(net);
    for (std::size_t l = 0; l < net.depth(); ++l)
      b.neuron_bits += net.layers[l].conv_output().count() * durations[l] * kNeuronBits;
    return b;
  }
  for (const auto& layer : net.layers) {
    b.bitmap_bits += layer.conv_output().count();
    if (layer.pool) b.pool_index_bits += layer.output().count() * kPoolIndexBits;
  }
  return b;
}

std::int64_t buffer_requirement(const NetworkSpec& net, BufferMode mode) {
  return buffer_breakdown(net, mode).total_bytes();
}

ResourceReport analyze(const NetworkSpec& net, const CrossbarGeometry& geom, int replication,
                       StorageMode mode) {
  ResourceReport r;
  for (const auto& layer : net.layers) {
    r.per_layer_crossbars.push_back(
        crossbar_requirement(layer, geom, layer.replication.value_or(replication), mode));
    r.total_crossbars += r.per_layer_crossbars.back();
  }
  r.durations = neuron_durations(net);
  r.cnn = buffer_breakdown(net, BufferMode::cnn_training);
  r.attack = buffer_breakdown(net, BufferMode::attacknet);
  r.buffer_bytes_cnn = r.cnn.total_bytes();
  r.buffer_bytes_attack = r.attack.total_bytes();
  r.ratio = static_cast<double>(r.buffer_bytes_attack) / static_cast<double>(r.buffer_bytes_cnn);
  return r;
}

}  // namespace a3
