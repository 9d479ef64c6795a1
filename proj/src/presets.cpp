#include "a3sim/presets.hpp"

#include <fmt/format.h>

#include "a3sim/error.hpp"

namespace a3 {

namespace {

LayerSpec conv(int k, int out, bool relu = true, bool pool = false) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.kernel_h = l.kernel_w = k;
  l.out_channels = out;
  l.relu = relu;
  if (pool) l.pool = PoolKind::max;
  return l;
}

LayerSpec fc(int out, bool relu = true, int replication = 0) {
  LayerSpec l;
  l.kind = LayerKind::fully_connected;
  l.out_channels = out;
  l.relu = relu;
  if (replication > 0) l.replication = replication;
  return l;
}

}  // namespace

NetworkSpec four_layer_network() {
  return make_network("four-layer", {8, 8, 16},
                      {conv(3, 16, true, true), conv(3, 64), fc(128), fc(10, false)}, 3,
                      {0, 0.0, 0.05, 10});
}

NetworkSpec uniform_network(int depth) {
  if (depth < 1) throw ShapeError("uniform network depth must be >= 1");
  std::vector<LayerSpec> layers(static_cast<std::size_t>(depth), conv(1, 16));
  return make_network(fmt::format("uniform{}", depth), {8, 8, 16}, std::move(layers), 1,
                      {0, 0.0, 0.01, 1});
}

NetworkSpec toy_linear_network() {
  return make_network("toy-linear", {1, 1, 4}, {fc(2, false)}, 1, {1, 0.01, 0.5, 100});
}

NetworkSpec network_preset(std::string_view name) {
  if (name == "four-layer") return four_layer_network();
  if (name == "uniform20") return uniform_network(20);
  if (name == "toy-linear") return toy_linear_network();
  // Totals in single-storage crossbars: 65, 10532, 18987 and 33355.
  if (name == "mnist-like")
    return make_network("mnist-like", {28, 28, 1},
                        {conv(5, 20, true, true), conv(5, 50, true, true), fc(500), fc(10, false)},
                        4, {3, 0.001, 0.05, 10});
  if (name == "gtsrb-like")
    return make_network("gtsrb-like", {32, 32, 3},
                        {conv(3, 32, true, true), conv(3, 64, true, true), fc(8192), fc(4096),
                         fc(4096), fc(4096), fc(43, false)},
                        4, {7, 0.001, 0.05, 10});
  if (name == "lisa-like")
    return make_network("lisa-like", {32, 32, 3},
                        {conv(3, 64, true, true), conv(3, 128, true, true), fc(8192), fc(4096),
                         fc(4096, true, 2), fc(4096, true, 2), fc(4096), fc(16, false)},
                        4, {5, 0.001, 0.05, 10});
  if (name == "inception-like")
    return make_network("inception-like", {32, 32, 3},
                        {conv(3, 64, true, true), conv(3, 128, true, true), fc(8192), fc(4096),
                         fc(8192), fc(4096), fc(8192), fc(4096), fc(8192), fc(4096),
                         fc(100, false)},
                        4, {11, 0.001, 0.05, 10});
  throw ParseError(fmt::format("no built-in network '{}'", name), "net");
}

std::vector<std::string> network_preset_names() {
  return {"four-layer", "uniform20", "toy-linear", "mnist-like", "gtsrb-like", "lisa-like",
          "inception-like"};
}

std::vector<std::string> standin_names() {
  return {"mnist-like", "gtsrb-like", "lisa-like", "inception-like"};
}

}  // namespace a3
