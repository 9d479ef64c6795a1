#pragma once

#include <vector>

#include "a3sim/attacknet.hpp"
#include "a3sim/crossbar.hpp"

namespace a3 {

/// Routes every layer product of the AttackNet reference through programmed crossbars.
/// Forward uses W^l; EP uses a second mapping holding the transpose. Activations and
/// errors are quantized per patch to `activation_bits` before streaming.
class CrossbarProducts {
 public:
  CrossbarProducts(const WeightSet<double>& weights, const CrossbarGeometry& geom,
                   StorageMode mode, int activation_bits = 16);

  Eigen::MatrixXd forward(std::size_t layer, const Eigen::MatrixXd& weights,
                          const Eigen::MatrixXd& patches) const;
  Eigen::MatrixXd backward(std::size_t layer, const Eigen::MatrixXd& weights,
                           const Eigen::MatrixXd& grads) const;

  const MappedMatrix& forward_mapping(std::size_t layer) const { return forward_.at(layer); }
  int activation_bits() const { return activation_bits_; }

 private:
  Eigen::MatrixXd apply_rows(const MappedMatrix& mapping, const Eigen::MatrixXd& rows) const;

  std::vector<MappedMatrix> forward_;
  std::vector<MappedMatrix> backward_;
  int activation_bits_;
};

}  // namespace a3
