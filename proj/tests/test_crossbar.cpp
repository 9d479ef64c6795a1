#include <doctest.h>

#include <array>

#include "a3sim/crossbar.hpp"
#include "a3sim/error.hpp"
#include "generators.hpp"

using namespace a3;
using a3::testing::Gen;

namespace {

IntMatrix random_int_matrix(Gen& g, int rows, int cols, std::int64_t limit) {
  IntMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g.range64(-limit, limit);
  return m;
}

QuantizedTensor random_input(Gen& g, int n, int bits) {
  const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1;
  IntVector v(n);
  for (int i = 0; i < n; ++i) v(i) = g.range64(-hi - 1, hi);
  return QuantizedTensor::from_vector(v, 1.0, bits);
}

// Plain triple-loop product, independent of Eigen's kernels.
IntVector matvec_oracle(const IntMatrix& w, const IntVector& x) {
  IntVector y = IntVector::Zero(w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i) y(j) += w(i, j) * x(i);
  return y;
}

CrossbarGeometry wide_adc() {
  CrossbarGeometry g;
  g.adc_bits = 16;
  return g;
}

}  // namespace

TEST_CASE("quantize: examples") {
  const auto zeros = quantize(Eigen::VectorXd::Zero(3), 8);
  CHECK(zeros.scale == 1.0);
  CHECK(zeros.values == IntVector::Zero(3));

  Eigen::VectorXd pm(2);
  pm << -1.0, 1.0;
  const auto q = quantize(pm, 8);
  CHECK(q.values(0) == -127);
  CHECK(q.values(1) == 127);

  CHECK_THROWS_AS(quantize(pm, 1), ShapeError);
  CHECK_THROWS_AS(quantize(pm, 17), ShapeError);
}

TEST_CASE("quantize: round-trip error at most half a step") {
  Gen g(21);
  for (int i = 0; i < 1000; ++i) {
    const int bits = g.range(2, 16);
    const auto x = g.vec(g.range(1, 40), -g.real(0.01, 100), g.real(0.01, 100));
    const auto q = quantize(x, bits);
    const std::int64_t limit = (std::int64_t{1} << (bits - 1)) - 1;
    CHECK(q.values.cwiseAbs().maxCoeff() <= limit);
    CHECK((q.dequantize() - x).cwiseAbs().maxCoeff() <= q.scale / 2 + 1e-12);
  }
}

TEST_CASE("slicing: digits recombine") {
  Gen g(22);
  for (int i = 0; i < 2000; ++i) {
    const int cell_bits = g.range(2, 6);
    const int count = g.range(1, 4);
    const std::int64_t base = std::int64_t{1} << cell_bits;
    std::int64_t span = 1;
    for (int k = 0; k < count; ++k) span *= base;
    const std::int64_t u = g.range64(0, span - 1);
    std::int64_t back = 0;
    const auto us = unsigned_slices(u, cell_bits, count);
    for (int k = count - 1; k >= 0; --k) back = back * base + us[static_cast<std::size_t>(k)];
    CHECK(back == u);

    const std::int64_t s = g.range64(-span / 4, span / 4);
    const auto ss = signed_slices(s, cell_bits, count);
    back = 0;
    for (int k = count - 1; k >= 0; --k) {
      CHECK(ss[static_cast<std::size_t>(k)] >= -base / 2);
      CHECK(ss[static_cast<std::size_t>(k)] < base / 2);
      back = back * base + ss[static_cast<std::size_t>(k)];
    }
    CHECK(back == s);
  }
  CHECK_THROWS_AS(unsigned_slices(256, 4, 2), ProgrammingError);
  CHECK_THROWS_AS(signed_slices(8, 4, 1), ProgrammingError);
}

TEST_CASE("program_dual: sign rule") {
  CrossbarGeometry geom;
  geom.cells_per_weight = 1;
  IntMatrix w(1, 2);
  w << 5, -3;
  const auto a = program_dual(QuantizedTensor::from_matrix(w, 1.0, 4), geom);
  CHECK(a.positive(0, 0) == 5);
  CHECK(a.negative(0, 0) == 0);
  CHECK(a.positive(0, 1) == 0);
  CHECK(a.negative(0, 1) == 3);
}

TEST_CASE("program_single: level = weight + bias") {
  CrossbarGeometry geom;
  geom.cells_per_weight = 1;
  IntMatrix w(1, 3);
  w << -8, 0, 7;
  const auto a = program_single(QuantizedTensor::from_matrix(w, 1.0, 4), geom);
  CHECK(a.bias_level == 8);
  CHECK(a.positive(0, 0) == 0);
  CHECK(a.positive(0, 1) == 8);
  CHECK(a.positive(0, 2) == 15);

  IntMatrix bad(1, 1);
  bad << 8;
  CHECK_THROWS_AS(program_single(QuantizedTensor::from_matrix(bad, 1.0, 5), geom),
                  ProgrammingError);
}

TEST_CASE("programming: reconstruction, cell ranges, mapping limits") {
  Gen g(23);
  const CrossbarGeometry geom;
  const auto limit = max_weight_level(geom);
  CHECK(limit == 119);
  for (int i = 0; i < 200; ++i) {
    const IntMatrix w = random_int_matrix(g, g.range(1, 128), g.range(1, 64), limit);
    const auto q = QuantizedTensor::from_matrix(w, 0.5, geom.weight_bits());
    const auto d = program_dual(q, geom);
    const auto s = program_single(q, geom);
    CHECK(d.reconstruct() == w);
    CHECK(s.reconstruct() == w);
    CHECK((d.positive.array() * d.negative.array()).abs().maxCoeff() == 0);
    CHECK(d.positive.minCoeff() >= 0);
    CHECK(d.negative.maxCoeff() <= 15);
    CHECK(s.positive.minCoeff() >= 0);
    CHECK(s.positive.maxCoeff() <= 15);
  }
  const IntMatrix tall = IntMatrix::Zero(129, 1);
  CHECK_THROWS_AS(program_dual(QuantizedTensor::from_matrix(tall, 1.0, 8), geom), MappingError);
  const IntMatrix wide = IntMatrix::Zero(1, 65);
  CHECK_THROWS_AS(program_single(QuantizedTensor::from_matrix(wide, 1.0, 8), geom), MappingError);
}

TEST_CASE("quantize_weights: every weight is programmable in both modes") {
  Gen g(24);
  const CrossbarGeometry geom;
  for (int i = 0; i < 50; ++i) {
    const auto w = g.mat(g.range(1, 100), g.range(1, 60), -3, 3);
    const auto q = quantize_weights(w, geom);
    CHECK_NOTHROW(program_dual(q, geom));
    CHECK_NOTHROW(program_single(q, geom));
    CHECK((q.matrix().cast<double>() * q.scale - w).cwiseAbs().maxCoeff() <= q.scale / 2 + 1e-12);
  }
}

TEST_CASE("shift_add") {
  CHECK(shift_add(0xA, 0x3, 4) == 0xA3);
  Gen g(25);
  for (int i = 0; i < 100; ++i) {
    const auto x = g.range64(-1000, 1000);
    CHECK(shift_add(0, x, 4) == x);
  }
  for (std::int64_t h = 0; h < 16; ++h)
    for (std::int64_t l = 0; l < 16; ++l) CHECK(shift_add(h, l, 4) == 16 * h + l);
}

TEST_CASE("adc_convert clips symmetrically") {
  CHECK(adc_convert(300, 8) == 255);
  CHECK(adc_convert(-300, 8) == -255);
  CHECK(adc_convert(17, 8) == 17);
}

TEST_CASE("max_pool4: examples and exhaustive first-occurrence check") {
  constexpr auto w = max_pool4(3, 7, 2, 9);
  static_assert(w.value == 9 && w.index == 3);
  CHECK(max_pool4(5, 5, 5, 5).index == 0);
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b)
      for (int c = 0; c < 8; ++c)
        for (int d = 0; d < 8; ++d) {
          const std::array<int, 4> v{a, b, c, d};
          int best = 0;
          for (int k = 1; k < 4; ++k)
            if (v[static_cast<std::size_t>(k)] > v[static_cast<std::size_t>(best)]) best = k;
          const auto r = max_pool4(a, b, c, d);
          CHECK(r.index == best);
          CHECK(r.value == v[static_cast<std::size_t>(best)]);
        }
}

TEST_CASE("mvm: identity") {
  const CrossbarGeometry geom;
  const IntMatrix eye = IntMatrix::Identity(16, 16);
  Gen g(26);
  const auto x = random_input(g, 16, 12);
  for (auto mode : {StorageMode::dual, StorageMode::single}) {
    const auto arr = program(QuantizedTensor::from_matrix(eye, 1.0, 8), geom, mode);
    CHECK(mvm(arr, x, geom).values == x.values);
  }
}

TEST_CASE("mvm: integer matmul oracle across geometries") {
  Gen g(27);
  for (int i = 0; i < 300; ++i) {
    CrossbarGeometry geom;
    geom.rows = g.range(1, 128);
    geom.cells_per_weight = g.range(1, 3);
    geom.cols = geom.cells_per_weight * g.range(1, 32);
    geom.dac_bits = g.range(1, 4);
    geom.adc_bits = 24;
    const IntMatrix w = random_int_matrix(g, g.range(1, geom.rows), g.range(1, geom.logical_cols()),
                                          max_weight_level(geom));
    const auto x = random_input(g, static_cast<int>(w.rows()), g.range(1, 16));
    const auto q = QuantizedTensor::from_matrix(w, 1.0, geom.weight_bits());
    const IntVector expect = matvec_oracle(w, x.values);
    MvmStats stats;
    for (auto mode : {StorageMode::dual, StorageMode::single}) {
      CHECK(mvm(program(q, geom, mode), x, geom, &stats).values == expect);
    }
    CHECK(stats.saturated == 0);
  }
}

TEST_CASE("mvm: narrow ADC stays within the accumulated clip bound") {
  Gen g(28);
  CrossbarGeometry geom;
  geom.adc_bits = 4;
  int saturating = 0;
  for (int i = 0; i < 100; ++i) {
    const IntMatrix w = random_int_matrix(g, 128, 16, max_weight_level(geom));
    const auto x = random_input(g, 128, 8);
    const IntVector exact = matvec_oracle(w, x.values);
    for (auto mode : {StorageMode::dual, StorageMode::single}) {
      MvmStats stats;
      const auto y = mvm(program(QuantizedTensor::from_matrix(w, 1.0, 8), geom, mode), x, geom,
                         &stats);
      CHECK(((y.values - exact).cwiseAbs().array() <= stats.clip_bound.array()).all());
      saturating += stats.saturated > 0;
    }
  }
  CHECK(saturating > 0);
}

TEST_CASE("mvm: zero weights in single mode cancel the bias for every input") {
  Gen g(29);
  const CrossbarGeometry geom;
  const auto arr = program_single(QuantizedTensor::from_matrix(IntMatrix::Zero(64, 32), 1.0, 8), geom);
  for (int i = 0; i < 50; ++i)
    CHECK(mvm(arr, random_input(g, 64, 16), geom).values == IntVector::Zero(32));
}

TEST_CASE("mvm: input validation") {
  const CrossbarGeometry geom;
  const auto arr = program_dual(QuantizedTensor::from_matrix(IntMatrix::Zero(4, 4), 1.0, 8), geom);
  CHECK_THROWS_AS(mvm(arr, QuantizedTensor::from_vector(IntVector::Zero(3), 1.0, 8), geom), ShapeError);
  IntVector big(4);
  big << 200, 0, 0, 0;
  CHECK_THROWS_AS(mvm(arr, QuantizedTensor::from_vector(big, 1.0, 8), geom), ShapeError);
}

TEST_CASE("dual_single_equiv_check: random instances and zero matrix") {
  Gen g(30);
  const auto geom = wide_adc();
  CHECK(dual_single_equiv_check(QuantizedTensor::from_matrix(IntMatrix::Zero(8, 8), 1.0, 8),
                                random_input(g, 8, 8), geom));
  for (int i = 0; i < 200; ++i) {
    const IntMatrix w = random_int_matrix(g, g.range(1, 128), g.range(1, 64), 119);
    CHECK(dual_single_equiv_check(QuantizedTensor::from_matrix(w, 1.0, 8),
                                  random_input(g, static_cast<int>(w.rows()), 16), geom));
  }
}

TEST_CASE("MappedMatrix: tiled product equals the full product") {
  Gen g(31);
  const auto geom = wide_adc();
  for (int i = 0; i < 20; ++i) {
    const IntMatrix w = random_int_matrix(g, g.range(1, 400), g.range(1, 200), 119);
    const auto x = random_input(g, static_cast<int>(w.rows()), 16);
    for (auto mode : {StorageMode::dual, StorageMode::single}) {
      const MappedMatrix m(QuantizedTensor::from_matrix(w, 2.0, 8), geom, mode);
      const auto expected_tiles = ((w.rows() + 127) / 128) * ((w.cols() + 63) / 64);
      CHECK(m.tile_count() == static_cast<std::size_t>(expected_tiles));
      const auto y = m.apply(x);
      CHECK(y.values == matvec_oracle(w, x.values));
      CHECK(y.scale == doctest::Approx(2.0));
    }
  }
}

TEST_CASE("hex_dump lists every word line") {
  CrossbarGeometry geom;
  IntMatrix w(2, 1);
  w << 0x12, -1;
  const auto s = hex_dump(program_dual(QuantizedTensor::from_matrix(w, 1.0, 8), geom));
  CHECK(s.find("1 2") != std::string::npos);
  const auto t = hex_dump(program_single(QuantizedTensor::from_matrix(w, 1.0, 8), geom));
  CHECK(std::count(t.begin(), t.end(), '\n') == 3);
}
