#include "a3sim/crossbar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace a3 {

namespace {

std::int64_t level_limit(int bits) { return (std::int64_t{1} << (bits - 1)) - 1; }

int bits_for(std::int64_t max_abs) {
  int bits = 2;
  while (bits < 63 && level_limit(bits) < max_abs) ++bits;
  return bits;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t m) {
  std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

}  // namespace

Eigen::VectorXd QuantizedTensor::dequantize() const {
  return (values.array() - zero_point).cast<double>() * scale;
}

IntMatrix QuantizedTensor::matrix() const {
  if (dims.size() != 2) throw ShapeError("quantized tensor is not rank 2");
  IntMatrix m(dims[0], dims[1]);
  for (int r = 0; r < dims[0]; ++r)
    for (int c = 0; c < dims[1]; ++c) m(r, c) = values(static_cast<Eigen::Index>(r) * dims[1] + c);
  return m;
}

QuantizedTensor QuantizedTensor::from_matrix(const IntMatrix& m, double scale, int bits) {
  QuantizedTensor q;
  q.dims = {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
  q.values.resize(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) q.values(r * m.cols() + c) = m(r, c);
  q.scale = scale;
  q.bits = bits;
  return q;
}

QuantizedTensor QuantizedTensor::from_vector(const IntVector& v, double scale, int bits) {
  QuantizedTensor q;
  q.dims = {static_cast<int>(v.size())};
  q.values = v;
  q.scale = scale;
  q.bits = bits;
  return q;
}

QuantizedTensor quantize_to_level(const Eigen::Ref<const Eigen::VectorXd>& values,
                                  std::int64_t max_level, int bits) {
  if (bits < 2 || bits > 32) throw ShapeError(fmt::format("quantization width {} outside [2, 32]", bits));
  if (max_level < 1 || max_level > level_limit(bits))
    throw ShapeError("quantization level does not fit the declared width");
  QuantizedTensor q;
  q.dims = {static_cast<int>(values.size())};
  q.bits = bits;
  const double peak = values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
  if (!std::isfinite(peak)) throw ShapeError("cannot quantize non-finite values");
  q.scale = peak > 0.0 ? peak / static_cast<double>(max_level) : 1.0;
  q.values.resize(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    auto level = static_cast<std::int64_t>(std::llround(values(i) / q.scale));
    q.values(i) = std::clamp(level, -max_level, max_level);
  }
  return q;
}

QuantizedTensor quantize(const Eigen::Ref<const Eigen::VectorXd>& values, int bits) {
  if (bits < 2 || bits > 16) throw ShapeError(fmt::format("quantization width {} outside [2, 16]", bits));
  return quantize_to_level(values, level_limit(bits), bits);
}

QuantizedTensor quantize_matrix(const Eigen::MatrixXd& values, int bits) {
  const Eigen::MatrixXd row_major_t = values.transpose();
  QuantizedTensor q = quantize(Eigen::Map<const Eigen::VectorXd>(row_major_t.data(), values.size()), bits);
  q.dims = {static_cast<int>(values.rows()), static_cast<int>(values.cols())};
  return q;
}

std::int64_t max_weight_level(const CrossbarGeometry& geom) {
  geom.validate();
  if (geom.cell_bits < 2) throw ShapeError("signed single-crossbar storage needs cell_bits >= 2");
  const std::int64_t base = std::int64_t{1} << geom.cell_bits;
  // Every signed slice at its maximum, base/2 - 1, weighted by base^k.
  std::int64_t digit_sum = 0;
  for (std::int64_t k = 0, power = 1; k < geom.cells_per_weight; ++k, power *= base)
    digit_sum += power;
  const std::int64_t single_max = (base / 2 - 1) * digit_sum;
  return std::min(single_max, level_limit(geom.weight_bits()));
}

QuantizedTensor quantize_weights(const Eigen::MatrixXd& weights, const CrossbarGeometry& geom) {
  const Eigen::MatrixXd row_major_t = weights.transpose();
  QuantizedTensor q = quantize_to_level(
      Eigen::Map<const Eigen::VectorXd>(row_major_t.data(), weights.size()),
      max_weight_level(geom), geom.weight_bits());
  q.dims = {static_cast<int>(weights.rows()), static_cast<int>(weights.cols())};
  return q;
}

std::vector<std::int64_t> unsigned_slices(std::int64_t magnitude, int cell_bits, int count) {
  const std::int64_t base = std::int64_t{1} << cell_bits;
  std::vector<std::int64_t> out(count);
  for (int k = 0; k < count; ++k) {
    out[k] = magnitude % base;
    magnitude /= base;
  }
  if (magnitude != 0) throw ProgrammingError("weight magnitude exceeds the slice width");
  return out;
}

std::vector<std::int64_t> signed_slices(std::int64_t value, int cell_bits, int count) {
  const std::int64_t base = std::int64_t{1} << cell_bits;
  const std::int64_t half = base / 2;
  const std::int64_t original = value;
  std::vector<std::int64_t> out(count);
  for (int k = 0; k < count; ++k) {
    out[k] = floor_mod(value + half, base) - half;
    value = (value - out[k]) / base;
  }
  if (value != 0)
    throw ProgrammingError(fmt::format("weight {} does not fit {} signed {}-bit slices", original,
                                       count, cell_bits));
  return out;
}

// Programming -----------------------------------------------------------------

namespace {

void check_fits(const QuantizedTensor& weights, const CrossbarGeometry& geom) {
  if (weights.dims.size() != 2) throw MappingError("weights must be a rank-2 tensor");
  const std::int64_t physical = static_cast<std::int64_t>(weights.dims[1]) * geom.cells_per_weight;
  if (weights.dims[0] > geom.rows || physical > geom.cols)
    throw MappingError(fmt::format("weight slice {}x{} ({} bit lines) exceeds {}x{} crossbar",
                                   weights.dims[0], weights.dims[1], physical, geom.rows,
                                   geom.cols));
}

int physical_col(int logical, int slice, int cells_per_weight) {
  return logical * cells_per_weight + (cells_per_weight - 1 - slice);
}

}  // namespace

std::int64_t ProgrammedArray::slice(int row, int col, int s) const {
  const int pc = physical_col(col, s, cells_per_weight);
  if (mode == StorageMode::dual) return positive(row, pc) - negative(row, pc);
  return positive(row, pc) - bias_level;
}

IntMatrix ProgrammedArray::reconstruct() const {
  IntMatrix w = IntMatrix::Zero(rows(), logical_cols());
  for (int r = 0; r < rows(); ++r)
    for (int c = 0; c < logical_cols(); ++c)
      for (int s = cells_per_weight - 1; s >= 0; --s)
        w(r, c) = shift_add(w(r, c), slice(r, c, s), cell_bits);
  return w;
}

ProgrammedArray program_dual(const QuantizedTensor& weights, const CrossbarGeometry& geom) {
  geom.validate();
  check_fits(weights, geom);
  const IntMatrix w = weights.matrix();
  ProgrammedArray a;
  a.mode = StorageMode::dual;
  a.cell_bits = geom.cell_bits;
  a.cells_per_weight = geom.cells_per_weight;
  a.scale = weights.scale;
  a.positive = IntMatrix::Zero(w.rows(), w.cols() * geom.cells_per_weight);
  a.negative = a.positive;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      const std::int64_t value = w(r, c);
      const auto digits = unsigned_slices(value < 0 ? -value : value, geom.cell_bits,
                                          geom.cells_per_weight);
      IntMatrix& target = value < 0 ? a.negative : a.positive;
      for (int s = 0; s < geom.cells_per_weight; ++s)
        target(r, physical_col(static_cast<int>(c), s, geom.cells_per_weight)) = digits[s];
    }
  }
  return a;
}

ProgrammedArray program_single(const QuantizedTensor& weights, const CrossbarGeometry& geom) {
  geom.validate();
  check_fits(weights, geom);
  const IntMatrix w = weights.matrix();
  ProgrammedArray a;
  a.mode = StorageMode::single;
  a.cell_bits = geom.cell_bits;
  a.cells_per_weight = geom.cells_per_weight;
  a.scale = weights.scale;
  a.bias_level = std::int64_t{1} << (geom.cell_bits - 1);
  a.positive = IntMatrix::Zero(w.rows(), w.cols() * geom.cells_per_weight);
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      const auto digits = signed_slices(w(r, c), geom.cell_bits, geom.cells_per_weight);
      for (int s = 0; s < geom.cells_per_weight; ++s)
        a.positive(r, physical_col(static_cast<int>(c), s, geom.cells_per_weight)) =
            digits[s] + a.bias_level;
    }
  }
  return a;
}

ProgrammedArray program(const QuantizedTensor& weights, const CrossbarGeometry& geom,
                        StorageMode mode) {
  return mode == StorageMode::dual ? program_dual(weights, geom) : program_single(weights, geom);
}

std::string hex_dump(const ProgrammedArray& array) {
  const int width = (array.cell_bits + 3) / 4;
  auto dump = [&](const IntMatrix& m, std::string& out) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c) out += ' ';
        out += fmt::format("{:0{}x}", static_cast<std::uint64_t>(m(r, c)), width);
      }
      out += '\n';
    }
  };
  std::string out;
  if (array.mode == StorageMode::dual) {
    out += fmt::format("# dual {}x{} cell_bits={}\n# positive\n", array.rows(),
                       array.physical_cols(), array.cell_bits);
    dump(array.positive, out);
    out += "# negative\n";
    dump(array.negative, out);
  } else {
    out += fmt::format("# single {}x{} cell_bits={} bias={:x}\n", array.rows(),
                       array.physical_cols(), array.cell_bits, array.bias_level);
    dump(array.positive, out);
  }
  return out;
}

// Datapath ------------------------------------------------------------------

std::int64_t shift_add(std::int64_t high, std::int64_t low, int shift) {
  return (high << shift) + low;
}

std::int64_t adc_convert(std::int64_t value, int adc_bits) {
  const std::int64_t full_scale = (std::int64_t{1} << adc_bits) - 1;
  return std::clamp(value, -full_scale, full_scale);
}

QuantizedTensor mvm(const ProgrammedArray& array, const QuantizedTensor& input,
                    const CrossbarGeometry& geom, MvmStats* stats) {
  const auto rows = array.rows();
  if (input.values.size() != rows)
    throw ShapeError(fmt::format("mvm input length {} does not match {} word lines",
                                 input.values.size(), rows));
  if (input.bits < 1 || input.bits > 62) throw ShapeError("mvm input width outside [1, 62]");
  if (array.cells_per_weight != geom.cells_per_weight || array.cell_bits != geom.cell_bits)
    throw ShapeError("programmed array does not match the crossbar geometry");

  const std::int64_t lo = -(std::int64_t{1} << (input.bits - 1));
  const std::int64_t hi = (std::int64_t{1} << (input.bits - 1)) - 1;
  const int dac = geom.dac_bits;
  const int steps = (input.bits + dac - 1) / dac;
  const int total_bits = steps * dac;
  const std::int64_t chunk_mask = (std::int64_t{1} << dac) - 1;

  // Word-line drive per step: unsigned chunks, the top chunk read as two's complement.
  IntMatrix drive(rows, steps);
  for (int i = 0; i < rows; ++i) {
    const std::int64_t x = input.values(i) - input.zero_point;
    if (x < lo || x > hi)
      throw ShapeError(fmt::format("mvm input {} does not fit {} bits", x, input.bits));
    const auto u = static_cast<std::uint64_t>(x) &
                   ((total_bits >= 64) ? ~std::uint64_t{0} : ((std::uint64_t{1} << total_bits) - 1));
    for (int t = 0; t < steps; ++t) {
      auto chunk = static_cast<std::int64_t>((u >> (t * dac)) & static_cast<std::uint64_t>(chunk_mask));
      if (t == steps - 1 && chunk >= (std::int64_t{1} << (dac - 1))) chunk -= std::int64_t{1} << dac;
      drive(i, t) = chunk;
    }
  }

  // Analog bit-line sums, after the subtractor (dual) or the constant-term column (single).
  IntMatrix analog = array.positive.transpose() * drive;
  if (array.mode == StorageMode::dual) {
    analog -= array.negative.transpose() * drive;
  } else {
    const IntVector bias_column = array.bias_level * drive.colwise().sum().transpose();
    analog.rowwise() -= bias_column.transpose();
  }

  const int logical = array.logical_cols();
  IntVector result = IntVector::Zero(logical);
  IntVector bound = IntVector::Zero(logical);
  std::int64_t saturated = 0;
  for (int j = 0; j < logical; ++j) {
    std::int64_t acc = 0;
    std::int64_t clip_acc = 0;
    for (int s = array.cells_per_weight - 1; s >= 0; --s) {
      const int pc = physical_col(j, s, array.cells_per_weight);
      std::int64_t column = 0;
      std::int64_t column_clip = 0;
      for (int t = steps - 1; t >= 0; --t) {
        const std::int64_t raw = analog(pc, t);
        const std::int64_t digital = adc_convert(raw, geom.adc_bits);
        if (digital != raw) ++saturated;
        column = shift_add(column, digital, dac);
        column_clip = shift_add(column_clip, raw > digital ? raw - digital : digital - raw, dac);
      }
      acc = shift_add(acc, column, array.cell_bits);
      clip_acc = shift_add(clip_acc, column_clip, array.cell_bits);
    }
    result(j) = acc;
    bound(j) = clip_acc;
  }
  if (stats) {
    stats->saturated += saturated;
    if (stats->clip_bound.size() != logical) stats->clip_bound = IntVector::Zero(logical);
    stats->clip_bound += bound;
  }
  const std::int64_t peak = logical ? result.cwiseAbs().maxCoeff() : 0;
  return QuantizedTensor::from_vector(result, array.scale * input.scale, bits_for(peak));
}

bool dual_single_equiv_check(const QuantizedTensor& weights, const QuantizedTensor& input,
                             const CrossbarGeometry& geom) {
  const auto dual = mvm(program_dual(weights, geom), input, geom);
  const auto single = mvm(program_single(weights, geom), input, geom);
  return dual.values == single.values;
}

// Tiling ------------------------------------------------------------------------

MappedMatrix::MappedMatrix(const QuantizedTensor& weights, const CrossbarGeometry& geom,
                           StorageMode mode)
    : geom_(geom), scale_(weights.scale) {
  geom.validate();
  const IntMatrix w = weights.matrix();
  rows_ = static_cast<int>(w.rows());
  cols_ = static_cast<int>(w.cols());
  const int tile_cols = geom.logical_cols();
  row_tiles_ = (rows_ + geom.rows - 1) / geom.rows;
  col_tiles_ = (cols_ + tile_cols - 1) / tile_cols;
  tiles_.reserve(static_cast<std::size_t>(row_tiles_) * col_tiles_);
  for (int rt = 0; rt < row_tiles_; ++rt) {
    for (int ct = 0; ct < col_tiles_; ++ct) {
      const int r0 = rt * geom.rows;
      const int c0 = ct * tile_cols;
      const int nr = std::min(geom.rows, rows_ - r0);
      const int nc = std::min(tile_cols, cols_ - c0);
      const IntMatrix block = w.block(r0, c0, nr, nc);
      tiles_.push_back(program(QuantizedTensor::from_matrix(block, scale_, weights.bits), geom, mode));
    }
  }
}

QuantizedTensor MappedMatrix::apply(const QuantizedTensor& input, MvmStats* stats) const {
  if (input.values.size() != rows_)
    throw ShapeError(fmt::format("mapped matrix expects {} inputs, got {}", rows_, input.values.size()));
  const int tile_cols = geom_.logical_cols();
  IntVector out = IntVector::Zero(cols_);
  for (int rt = 0; rt < row_tiles_; ++rt) {
    const int r0 = rt * geom_.rows;
    const int nr = std::min(geom_.rows, rows_ - r0);
    QuantizedTensor part = QuantizedTensor::from_vector(input.values.segment(r0, nr), input.scale, input.bits);
    part.zero_point = input.zero_point;
    for (int ct = 0; ct < col_tiles_; ++ct) {
      const int c0 = ct * tile_cols;
      const auto& tile = tiles_[static_cast<std::size_t>(rt) * col_tiles_ + ct];
      MvmStats tile_stats;
      const QuantizedTensor y = mvm(tile, part, geom_, stats ? &tile_stats : nullptr);
      out.segment(c0, y.values.size()) += y.values;
      if (stats) {
        stats->saturated += tile_stats.saturated;
        if (stats->clip_bound.size() != cols_) stats->clip_bound = IntVector::Zero(cols_);
        stats->clip_bound.segment(c0, y.values.size()) += tile_stats.clip_bound;
      }
    }
  }
  const std::int64_t peak = cols_ ? out.cwiseAbs().maxCoeff() : 0;
  return QuantizedTensor::from_vector(out, scale_ * input.scale, bits_for(peak));
}

}  // namespace a3
