#pragma once

#include <string_view>

#include "a3sim/error.hpp"

namespace a3 {

enum class StorageMode { dual, single };

std::string_view to_string(StorageMode mode);
StorageMode storage_mode_from_string(std::string_view text);

/// Physical shape and converter widths of one crossbar tile.
struct CrossbarGeometry {
  int rows = 128;
  int cols = 128;
  int cell_bits = 4;
  /// Cells (physical bit lines) holding one weight; weight width is cell_bits * cells_per_weight.
  int cells_per_weight = 2;
  int adc_bits = 8;
  int dac_bits = 1;

  int weight_bits() const { return cell_bits * cells_per_weight; }
  /// Logical weight columns that fit in one tile without splitting a weight across tiles.
  int logical_cols() const { return cols / cells_per_weight; }

  void validate() const;
};

}  // namespace a3
