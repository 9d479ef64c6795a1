#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "a3sim/geometry.hpp"

namespace a3 {

using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using IntVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

/// Fixed-point tensor: real value = (values - zero_point) * scale. Values are row-major.
struct QuantizedTensor {
  std::vector<int> dims;
  IntVector values;
  double scale = 1.0;
  std::int64_t zero_point = 0;
  int bits = 16;

  Eigen::VectorXd dequantize() const;
  /// Reinterprets a rank-2 tensor as a matrix.
  IntMatrix matrix() const;
  static QuantizedTensor from_matrix(const IntMatrix& m, double scale, int bits);
  static QuantizedTensor from_vector(const IntVector& v, double scale, int bits);
};

/// Symmetric linear quantization onto [-(2^(bits-1)-1), 2^(bits-1)-1]. An all-zero input
/// gets scale 1.
QuantizedTensor quantize(const Eigen::Ref<const Eigen::VectorXd>& values, int bits);
QuantizedTensor quantize_matrix(const Eigen::MatrixXd& values, int bits);

/// Symmetric quantization with an explicit largest integer level.
QuantizedTensor quantize_to_level(const Eigen::Ref<const Eigen::VectorXd>& values,
                                  std::int64_t max_level, int bits);

/// Largest weight magnitude representable in both storage modes for this geometry.
std::int64_t max_weight_level(const CrossbarGeometry& geom);

/// Quantizes a weight matrix (rows = word lines, cols = logical bit lines) for programming.
QuantizedTensor quantize_weights(const Eigen::MatrixXd& weights, const CrossbarGeometry& geom);

// Bit slicing --------------------------------------------------------------

/// Unsigned base-2^cell_bits digits of `magnitude`, least significant first.
std::vector<std::int64_t> unsigned_slices(std::int64_t magnitude, int cell_bits, int count);
/// Signed digits in [-2^(cell_bits-1), 2^(cell_bits-1)-1], least significant first.
/// Throws ProgrammingError when `value` needs more than `count` digits.
std::vector<std::int64_t> signed_slices(std::int64_t value, int cell_bits, int count);

// Programmed arrays --------------------------------------------------------

/// One crossbar tile holding a quantized weight matrix.
///
/// Physical column `j * cells_per_weight + k` stores slice `cells_per_weight - 1 - k` of
/// logical column j, so the most significant cell sits leftmost in the row.
/// In dual mode the signed slice is `positive - negative`; in single mode it is
/// `positive - bias_level`, the bias column supplying the constant term at readout.
struct ProgrammedArray {
  StorageMode mode = StorageMode::dual;
  int cell_bits = 4;
  int cells_per_weight = 2;
  IntMatrix positive;
  IntMatrix negative;
  std::int64_t bias_level = 0;
  double scale = 1.0;

  int rows() const { return static_cast<int>(positive.rows()); }
  int physical_cols() const { return static_cast<int>(positive.cols()); }
  int logical_cols() const { return physical_cols() / cells_per_weight; }

  /// Signed value of slice `s` (0 = least significant) of weight (row, col).
  std::int64_t slice(int row, int col, int s) const;
  /// Signed quantized weights recovered from the cell levels.
  IntMatrix reconstruct() const;
};

ProgrammedArray program_dual(const QuantizedTensor& weights, const CrossbarGeometry& geom);
ProgrammedArray program_single(const QuantizedTensor& weights, const CrossbarGeometry& geom);
ProgrammedArray program(const QuantizedTensor& weights, const CrossbarGeometry& geom,
                        StorageMode mode);

/// Hex dump of the cell levels, one line per word line.
std::string hex_dump(const ProgrammedArray& array);

// Datapath -----------------------------------------------------------------

struct MvmStats {
  /// ADC conversions that clipped.
  std::int64_t saturated = 0;
  /// Per logical column, the sum of |clipped amount| weighted by its Shift&Add position.
  /// The saturated result differs from the exact one by at most this much.
  IntVector clip_bound;
};

/// (high << shift) + low.
std::int64_t shift_add(std::int64_t high, std::int64_t low, int shift);

/// Clips a signed bit-line sum to the ADC full scale of +-(2^adc_bits - 1).
std::int64_t adc_convert(std::int64_t value, int adc_bits);

/// Bit-serial matrix-vector product: y_j = sum_i w_ij x_i. The input is streamed LSB first,
/// dac_bits per step, the top step carrying the two's-complement sign.
QuantizedTensor mvm(const ProgrammedArray& array, const QuantizedTensor& input,
                    const CrossbarGeometry& geom, MvmStats* stats = nullptr);

template <typename T>
struct PoolWinner {
  T value;
  int index;
};

/// Two-level comparator tree over a 2x2 window (a b / c d). Ties go to the lower index.
template <typename T>
constexpr PoolWinner<T> max_pool4(T a, T b, T c, T d) {
  const PoolWinner<T> left = b > a ? PoolWinner<T>{b, 1} : PoolWinner<T>{a, 0};
  const PoolWinner<T> right = d > c ? PoolWinner<T>{d, 3} : PoolWinner<T>{c, 2};
  return right.value > left.value ? right : left;
}

/// True when dual-crossbar and single-crossbar readouts agree bit for bit.
bool dual_single_equiv_check(const QuantizedTensor& weights, const QuantizedTensor& input,
                             const CrossbarGeometry& geom);

/// A weight matrix larger than one tile, split across a grid of tiles.
/// Row tiles are summed digitally after Shift&Add.
class MappedMatrix {
 public:
  MappedMatrix() = default;
  MappedMatrix(const QuantizedTensor& weights, const CrossbarGeometry& geom, StorageMode mode);

  QuantizedTensor apply(const QuantizedTensor& input, MvmStats* stats = nullptr) const;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t tile_count() const { return tiles_.size(); }
  double scale() const { return scale_; }

 private:
  CrossbarGeometry geom_;
  int rows_ = 0;
  int cols_ = 0;
  int row_tiles_ = 0;
  int col_tiles_ = 0;
  double scale_ = 1.0;
  std::vector<ProgrammedArray> tiles_;
};

}  // namespace a3
