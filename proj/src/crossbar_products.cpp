#include "a3sim/crossbar_products.hpp"

namespace a3 {

CrossbarProducts::CrossbarProducts(const WeightSet<double>& weights, const CrossbarGeometry& geom,
                                   StorageMode mode, int activation_bits)
    : activation_bits_(activation_bits) {
  for (const auto& w : weights) {
    forward_.emplace_back(quantize_weights(w, geom), geom, mode);
    backward_.emplace_back(quantize_weights(w.transpose(), geom), geom, mode);
  }
}

Eigen::MatrixXd CrossbarProducts::apply_rows(const MappedMatrix& mapping,
                                             const Eigen::MatrixXd& rows) const {
  Eigen::MatrixXd out(rows.rows(), mapping.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    const Eigen::VectorXd x = rows.row(r).transpose();
    out.row(r) = mapping.apply(quantize(x, activation_bits_)).dequantize().transpose();
  }
  return out;
}

Eigen::MatrixXd CrossbarProducts::forward(std::size_t layer, const Eigen::MatrixXd&,
                                          const Eigen::MatrixXd& patches) const {
  return apply_rows(forward_.at(layer), patches);
}

Eigen::MatrixXd CrossbarProducts::backward(std::size_t layer, const Eigen::MatrixXd&,
                                           const Eigen::MatrixXd& grads) const {
  return apply_rows(backward_.at(layer), grads);
}

}  // namespace a3
