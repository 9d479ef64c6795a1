#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "a3sim/geometry.hpp"

namespace a3 {

enum class LayerKind { conv, fully_connected };
enum class PoolKind { max, avg };
enum class BufferMode { cnn_training, attacknet };

/// Feature-map extent in neurons, stored height-width-channel.
struct Dims {
  int height = 1;
  int width = 1;
  int channels = 1;

  std::int64_t count() const {
    return static_cast<std::int64_t>(height) * width * channels;
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  Dims input;
  int kernel_h = 1;
  int kernel_w = 1;
  int out_channels = 1;
  int stride = 1;
  bool relu = false;
  /// Pooling window is fixed at 2x2 with stride 2.
  std::optional<PoolKind> pool;
  /// Copies of the logical mapping matrix; unset means "use the caller's default".
  std::optional<int> replication;

  /// Output of the convolution itself, before pooling.
  Dims conv_output() const;
  /// Output handed to the next layer, after pooling.
  Dims output() const;
  /// Rows of the lowered weight matrix (kh * kw * in_channels).
  std::int64_t matrix_rows() const {
    return static_cast<std::int64_t>(kernel_h) * kernel_w * input.channels;
  }
  std::int64_t matrix_cols() const { return out_channels; }

  void validate() const;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct AttackConfig {
  int target_label = 0;
  double lambda = 0.0;
  double learning_rate = 0.01;
  int iterations = 1;
  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

struct NetworkSpec {
  std::string name;
  int batch_size = 1;
  Dims input;
  std::vector<LayerSpec> layers;
  AttackConfig attack;

  std::size_t depth() const { return layers.size(); }
  /// Class count: neuron count of the final layer's output.
  std::int64_t num_classes() const;

  /// Checks the shape chain, layer invariants and attack target.
  void validate() const;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Parses the JSON network description. Layer input dims are derived from the chain.
NetworkSpec parse_network(std::string_view text);
NetworkSpec load_network(const std::filesystem::path& path);
/// Canonical JSON text; parse_network(emit_network(n)) == n.
std::string emit_network(const NetworkSpec& net);

/// Builds a layer list from per-layer shapes, filling input dims along the chain.
NetworkSpec make_network(std::string name, Dims input, std::vector<LayerSpec> layers,
                         int batch_size, AttackConfig attack = {});

// Resource analysis --------------------------------------------------------

/// Crossbars needed to hold one layer's weights.
std::int64_t crossbar_requirement(const LayerSpec& layer, const CrossbarGeometry& geom,
                                  int replication, StorageMode mode);

/// Buffer-residency duration (in pipeline stages) of each layer's neurons during CNN training.
/// Layer l (1-based) of an L-layer net stays 2(L-l)+1 stages.
std::vector<int> neuron_durations(const NetworkSpec& net);

struct BufferBreakdown {
  std::int64_t neuron_bits = 0;
  std::int64_t error_bits = 0;
  std::int64_t bitmap_bits = 0;
  std::int64_t pool_index_bits = 0;

  std::int64_t total_bits() const {
    return neuron_bits + error_bits + bitmap_bits + pool_index_bits;
  }
  std::int64_t total_bytes() const { return (total_bits() + 7) / 8; }
};

inline constexpr int kNeuronBits = 16;
inline constexpr int kPoolIndexBits = 2;

BufferBreakdown buffer_breakdown(const NetworkSpec& net, BufferMode mode);
std::int64_t buffer_requirement(const NetworkSpec& net, BufferMode mode);

struct ResourceReport {
  std::vector<std::int64_t> per_layer_crossbars;
  std::int64_t total_crossbars = 0;
  std::vector<int> durations;
  BufferBreakdown cnn;
  BufferBreakdown attack;
  std::int64_t buffer_bytes_cnn = 0;
  std::int64_t buffer_bytes_attack = 0;
  double ratio = 0.0;
};

ResourceReport analyze(const NetworkSpec& net, const CrossbarGeometry& geom, int replication,
                       StorageMode mode);

std::string_view to_string(LayerKind kind);
std::string_view to_string(PoolKind kind);

}  // namespace a3
