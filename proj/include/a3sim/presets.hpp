#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "a3sim/netspec.hpp"

namespace a3 {

/// Two conv and two fully connected layers on an 8x8x16 input, batch 3. With the default
/// geometry the layers cost 2, 2, 2 and 1 crossbars.
NetworkSpec four_layer_network();

/// `depth` identical 1x1 conv layers (16 channels, ReLU) on an 8x8x16 input.
NetworkSpec uniform_network(int depth = 20);

/// One fully connected layer from 4 inputs to 2 classes, no activation.
NetworkSpec toy_linear_network();

/// Built-in nets: four-layer, uniform20, toy-linear, and the desk-scale stand-ins
/// mnist-like, gtsrb-like, lisa-like and inception-like. The stand-ins are sized to land in
/// different capacity regimes of the built-in hardware presets; they do not reproduce any
/// published benchmark topology.
NetworkSpec network_preset(std::string_view name);
std::vector<std::string> network_preset_names();
std::vector<std::string> standin_names();

}  // namespace a3
