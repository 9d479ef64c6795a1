#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "a3sim/crossbar.hpp"
#include "a3sim/error.hpp"
#include "a3sim/netspec.hpp"

namespace a3 {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Frozen per-layer weights. Layer l maps an im2col patch (kh*kw*cin) to cout outputs,
/// so W^l is (kh*kw*cin) x cout. There are no mutators: the attack never updates weights.
template <typename Scalar>
class WeightSet {
 public:
  WeightSet() = default;
  explicit WeightSet(std::vector<Mat<Scalar>> layers) : layers_(std::move(layers)) {}

  std::size_t size() const { return layers_.size(); }
  const Mat<Scalar>& operator[](std::size_t l) const { return layers_.at(l); }
  auto begin() const { return layers_.begin(); }
  auto end() const { return layers_.end(); }

  /// FNV-1a over shapes and raw coefficients.
  std::uint64_t digest() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* data, std::size_t n) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 0x100000001b3ull;
    };
    for (const auto& w : layers_) {
      const std::int64_t shape[2] = {w.rows(), w.cols()};
      mix(shape, sizeof shape);
      mix(w.data(), sizeof(Scalar) * static_cast<std::size_t>(w.size()));
    }
    return h;
  }

 private:
  std::vector<Mat<Scalar>> layers_;
};

template <typename Scalar>
void check_weights(const NetworkSpec& net, const WeightSet<Scalar>& weights) {
  if (weights.size() != net.depth())
    throw ShapeError(fmt::format("weight set has {} layers, network has {}", weights.size(), net.depth()));
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers[l];
    if (weights[l].rows() != layer.matrix_rows() || weights[l].cols() != layer.matrix_cols())
      throw ShapeError(fmt::format("layer {} weights are {}x{}, expected {}x{}", l + 1,
                                   weights[l].rows(), weights[l].cols(), layer.matrix_rows(),
                                   layer.matrix_cols()));
  }
}

/// He-uniform initialisation, deterministic for a given seed.
template <typename Scalar>
WeightSet<Scalar> random_weights(const NetworkSpec& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Mat<Scalar>> layers;
  for (const auto& layer : net.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.matrix_rows()));
    Mat<Scalar> w(layer.matrix_rows(), layer.matrix_cols());
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w.data()[i] = static_cast<Scalar>((2.0 * uniform01(rng) - 1.0) * bound);
    layers.push_back(std::move(w));
  }
  return WeightSet<Scalar>(std::move(layers));
}

// Lowering ---------------------------------------------------------------------
// Feature maps are flattened height-width-channel. Patch columns run (ky, kx, ci), matching
// the word-line order of the mapped weight matrix.

template <typename Scalar>
Mat<Scalar> im2col(const LayerSpec& layer, const Vec<Scalar>& input) {
  const Dims in = layer.input;
  const Dims out = layer.conv_output();
  if (input.size() != in.count())
    throw ShapeError(fmt::format("layer input has {} values, expected {}", input.size(), in.count()));
  Mat<Scalar> patches(out.height * out.width, layer.matrix_rows());
  for (int oy = 0; oy < out.height; ++oy)
    for (int ox = 0; ox < out.width; ++ox) {
      const Eigen::Index row = oy * out.width + ox;
      Eigen::Index col = 0;
      for (int ky = 0; ky < layer.kernel_h; ++ky)
        for (int kx = 0; kx < layer.kernel_w; ++kx) {
          const Eigen::Index base =
              (static_cast<Eigen::Index>(oy * layer.stride + ky) * in.width + ox * layer.stride + kx) *
              in.channels;
          patches.row(row).segment(col, in.channels) = input.segment(base, in.channels).transpose();
          col += in.channels;
        }
    }
  return patches;
}

/// Adjoint of im2col: scatter-adds patch gradients back onto the input map.
template <typename Scalar>
Vec<Scalar> col2im(const LayerSpec& layer, const Mat<Scalar>& patches) {
  const Dims in = layer.input;
  const Dims out = layer.conv_output();
  Vec<Scalar> grad = Vec<Scalar>::Zero(in.count());
  for (int oy = 0; oy < out.height; ++oy)
    for (int ox = 0; ox < out.width; ++ox) {
      const Eigen::Index row = oy * out.width + ox;
      Eigen::Index col = 0;
      for (int ky = 0; ky < layer.kernel_h; ++ky)
        for (int kx = 0; kx < layer.kernel_w; ++kx) {
          const Eigen::Index base =
              (static_cast<Eigen::Index>(oy * layer.stride + ky) * in.width + ox * layer.stride + kx) *
              in.channels;
          grad.segment(base, in.channels) += patches.row(row).segment(col, in.channels).transpose();
          col += in.channels;
        }
    }
  return grad;
}

/// Exact dense products; the functional reference.
template <typename Scalar>
struct ExactProducts {
  Mat<Scalar> forward(std::size_t, const Mat<Scalar>& weights, const Mat<Scalar>& patches) const {
    return patches * weights;
  }
  Mat<Scalar> backward(std::size_t, const Mat<Scalar>& weights, const Mat<Scalar>& grads) const {
    return grads * weights.transpose();
  }
};

// Forward -----------------------------------------------------------------------

struct LayerTrace {
  /// One bit per conv output, set iff the pre-activation is > 0. Empty without ReLU.
  std::vector<bool> relu_bitmap;
  /// Winning position (0..3) per pooled output, max pooling only.
  std::vector<std::uint8_t> pool_index;
};

template <typename Scalar>
struct ForwardState {
  /// activations[0] is the network input; activations[l] is the output of layer l.
  std::vector<Vec<Scalar>> activations;
  std::vector<LayerTrace> layers;

  const Vec<Scalar>& logits() const { return activations.back(); }
};

namespace detail {

/// Flat indices of the 2x2 window (a b / c d) behind pooled output (py, px, ch).
inline std::array<Eigen::Index, 4> pool_window(const Dims& conv, int py, int px, int ch) {
  auto at = [&](int y, int x) {
    return (static_cast<Eigen::Index>(y) * conv.width + x) * conv.channels + ch;
  };
  return {at(2 * py, 2 * px), at(2 * py, 2 * px + 1), at(2 * py + 1, 2 * px),
          at(2 * py + 1, 2 * px + 1)};
}

}  // namespace detail

template <typename Scalar, typename Products = ExactProducts<Scalar>>
Vec<Scalar> forward_layer(const LayerSpec& layer, const Mat<Scalar>& weights,
                          const Vec<Scalar>& input, LayerTrace& trace, std::size_t index = 0,
                          const Products& products = {}) {
  const Mat<Scalar> pre = products.forward(index, weights, im2col(layer, input));
  // pre is positions x channels; flatten to HWC.
  const Mat<Scalar> pre_t = pre.transpose();
  Vec<Scalar> conv = Eigen::Map<const Vec<Scalar>>(pre_t.data(), pre_t.size());

  trace = {};
  if (layer.relu) {
    trace.relu_bitmap.resize(static_cast<std::size_t>(conv.size()));
    for (Eigen::Index i = 0; i < conv.size(); ++i) {
      trace.relu_bitmap[static_cast<std::size_t>(i)] = conv(i) > Scalar(0);
      if (!(conv(i) > Scalar(0))) conv(i) = Scalar(0);
    }
  }
  if (!layer.pool) return conv;

  const Dims c = layer.conv_output();
  const Dims o = layer.output();
  Vec<Scalar> pooled(o.count());
  if (*layer.pool == PoolKind::max) trace.pool_index.resize(static_cast<std::size_t>(o.count()));
  for (int py = 0; py < o.height; ++py)
    for (int px = 0; px < o.width; ++px)
      for (int ch = 0; ch < o.channels; ++ch) {
        const auto w = detail::pool_window(c, py, px, ch);
        const Eigen::Index out = (static_cast<Eigen::Index>(py) * o.width + px) * o.channels + ch;
        if (*layer.pool == PoolKind::max) {
          const auto winner = max_pool4(conv(w[0]), conv(w[1]), conv(w[2]), conv(w[3]));
          pooled(out) = winner.value;
          trace.pool_index[static_cast<std::size_t>(out)] = static_cast<std::uint8_t>(winner.index);
        } else {
          pooled(out) = (conv(w[0]) + conv(w[1]) + conv(w[2]) + conv(w[3])) / Scalar(4);
        }
      }
  return pooled;
}

template <typename Scalar, typename Products = ExactProducts<Scalar>>
ForwardState<Scalar> forward(const NetworkSpec& net, const WeightSet<Scalar>& weights,
                             const Vec<Scalar>& input, const Products& products = {}) {
  check_weights(net, weights);
  if (input.size() != net.input.count())
    throw ShapeError(fmt::format("input has {} values, network expects {}", input.size(), net.input.count()));
  ForwardState<Scalar> state;
  state.activations.reserve(net.depth() + 1);
  state.layers.resize(net.depth());
  state.activations.push_back(input);
  for (std::size_t l = 0; l < net.depth(); ++l)
    state.activations.push_back(forward_layer(net.layers[l], weights[l], state.activations.back(),
                                              state.layers[l], l, products));
  return state;
}

// Loss and output error --------------------------------------------------------

template <typename Scalar>
Vec<Scalar> softmax(const Vec<Scalar>& logits) {
  const Vec<Scalar> e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

/// Cross-entropy toward the target label plus lambda * ||mask||^2.
template <typename Scalar>
Scalar loss(const Vec<Scalar>& logits, const AttackConfig& attack, const Vec<Scalar>& mask) {
  if (attack.target_label < 0 || attack.target_label >= logits.size())
    throw ShapeError("target label outside the logit range");
  const Scalar peak = logits.maxCoeff();
  const Scalar log_sum = peak + std::log((logits.array() - peak).exp().sum());
  return log_sum - logits(attack.target_label) + Scalar(attack.lambda) * mask.squaredNorm();
}

/// dLoss/dlogits of the cross-entropy term: softmax(logits) - onehot(target).
template <typename Scalar>
Vec<Scalar> error_init(const Vec<Scalar>& logits, const AttackConfig& attack) {
  Vec<Scalar> delta = softmax(logits);
  delta(attack.target_label) -= Scalar(1);
  return delta;
}

// Error propagation ----------------------------------------------------------------

/// Maps dLoss/d(output of layer) to dLoss/d(input of layer): routes through pooling, masks
/// with the ReLU bitmap, then applies the transposed weights.
template <typename Scalar, typename Products = ExactProducts<Scalar>>
Vec<Scalar> backprop_error(const LayerSpec& layer, const Mat<Scalar>& weights,
                           const Vec<Scalar>& delta, const LayerTrace& trace,
                           std::size_t index = 0, const Products& products = {}) {
  const Dims c = layer.conv_output();
  const Dims o = layer.output();
  if (delta.size() != o.count())
    throw ShapeError(fmt::format("error has {} values, layer output has {}", delta.size(), o.count()));

  Vec<Scalar> conv_delta;
  if (!layer.pool) {
    conv_delta = delta;
  } else {
    conv_delta = Vec<Scalar>::Zero(c.count());
    for (int py = 0; py < o.height; ++py)
      for (int px = 0; px < o.width; ++px)
        for (int ch = 0; ch < o.channels; ++ch) {
          const auto w = detail::pool_window(c, py, px, ch);
          const Eigen::Index out = (static_cast<Eigen::Index>(py) * o.width + px) * o.channels + ch;
          if (*layer.pool == PoolKind::max) {
            conv_delta(w[trace.pool_index.at(static_cast<std::size_t>(out))]) += delta(out);
          } else {
            for (auto i : w) conv_delta(i) += delta(out) / Scalar(4);
          }
        }
  }
  if (layer.relu) {
    for (Eigen::Index i = 0; i < conv_delta.size(); ++i)
      if (!trace.relu_bitmap.at(static_cast<std::size_t>(i))) conv_delta(i) = Scalar(0);
  }
  // Back to positions x channels.
  const Mat<Scalar> grads =
      Eigen::Map<const Mat<Scalar>>(conv_delta.data(), c.channels, c.height * c.width).transpose();
  return col2im(layer, products.backward(index, weights, grads));
}

/// Runs EP from the output error down to the network input. deltas[l] is the error at the
/// output of layer l; deltas[0] is the error at the input.
template <typename Scalar, typename Products = ExactProducts<Scalar>>
std::vector<Vec<Scalar>> backprop_chain(const NetworkSpec& net, const WeightSet<Scalar>& weights,
                                        const ForwardState<Scalar>& state,
                                        const Vec<Scalar>& output_error,
                                        const Products& products = {}) {
  std::vector<Vec<Scalar>> deltas(net.depth() + 1);
  deltas[net.depth()] = output_error;
  for (std::size_t l = net.depth(); l-- > 0;)
    deltas[l] = backprop_error(net.layers[l], weights[l], deltas[l + 1], state.layers[l], l, products);
  return deltas;
}

/// Gradient of the full loss with respect to the mask (input = clean + mask).
template <typename Scalar>
Vec<Scalar> input_gradient(const Vec<Scalar>& input_error, const AttackConfig& attack,
                           const Vec<Scalar>& mask) {
  return input_error + Scalar(2 * attack.lambda) * mask;
}

template <typename Scalar>
Vec<Scalar> update_mask(const Vec<Scalar>& mask, const Vec<Scalar>& grad, Scalar learning_rate) {
  if (mask.size() != grad.size()) throw ShapeError("mask and gradient sizes differ");
  return mask - learning_rate * grad;
}

template <typename Scalar>
struct LossGradient {
  Scalar loss;
  Vec<Scalar> gradient;
  /// Fraction of images whose argmax equals the target label.
  double hit_rate;
};

/// Loss and mask gradient averaged over a batch of clean images sharing one mask.
template <typename Scalar, typename Products = ExactProducts<Scalar>>
LossGradient<Scalar> loss_and_gradient(const NetworkSpec& net, const WeightSet<Scalar>& weights,
                                       std::span<const Vec<Scalar>> clean_inputs,
                                       const Vec<Scalar>& mask, const AttackConfig& attack,
                                       const Products& products = {}) {
  if (clean_inputs.empty()) throw ShapeError("no clean inputs");
  Scalar ce = 0;
  Vec<Scalar> error_sum = Vec<Scalar>::Zero(mask.size());
  int hits = 0;
  const AttackConfig no_penalty{attack.target_label, 0.0, attack.learning_rate, attack.iterations};
  for (const auto& clean : clean_inputs) {
    const auto state = forward(net, weights, Vec<Scalar>(clean + mask), products);
    ce += loss(state.logits(), no_penalty, mask);
    Eigen::Index best = 0;
    state.logits().maxCoeff(&best);
    hits += best == attack.target_label;
    error_sum += backprop_chain(net, weights, state, error_init(state.logits(), attack), products)[0];
  }
  const auto n = static_cast<Scalar>(clean_inputs.size());
  return {ce / n + Scalar(attack.lambda) * mask.squaredNorm(),
          input_gradient(Vec<Scalar>(error_sum / n), attack, mask),
          static_cast<double>(hits) / static_cast<double>(clean_inputs.size())};
}

// Training -------------------------------------------------------------------------

template <typename Scalar>
struct IterationRecord {
  int iteration;
  Scalar loss;
  double hit_rate;
  /// Every image classified as the target label.
  bool misclassified;
  /// Mask used for this iteration's forward pass.
  Vec<Scalar> mask;
};

template <typename Scalar>
struct TrainLog {
  std::vector<IterationRecord<Scalar>> iterations;
  Vec<Scalar> final_mask;
};

/// Plain gradient descent on the mask, starting from zero. Weights are never touched.
template <typename Scalar, typename Products = ExactProducts<Scalar>>
TrainLog<Scalar> train(const NetworkSpec& net, const WeightSet<Scalar>& weights,
                       std::span<const Vec<Scalar>> clean_inputs, const AttackConfig& attack,
                       const Products& products = {}) {
  if (attack.iterations < 1) throw ShapeError("attack needs at least one iteration");
  if (!(attack.learning_rate > 0)) throw ShapeError("learning rate must be > 0");
  check_weights(net, weights);
  TrainLog<Scalar> log;
  Vec<Scalar> mask = Vec<Scalar>::Zero(net.input.count());
  for (int it = 1; it <= attack.iterations; ++it) {
    auto step = loss_and_gradient(net, weights, clean_inputs, mask, attack, products);
    if (!std::isfinite(static_cast<double>(step.loss)) || !step.gradient.allFinite())
      throw DivergenceError(fmt::format("loss became non-finite at iteration {}", it), it);
    log.iterations.push_back({it, step.loss, step.hit_rate, step.hit_rate == 1.0, mask});
    mask = update_mask(mask, step.gradient, Scalar(attack.learning_rate));
  }
  log.final_mask = mask;
  return log;
}

}  // namespace a3
