#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "a3sim/attacknet.hpp"
#include "a3sim/netspec.hpp"

namespace a3::testing {

/// Direct nested-loop convolution + ReLU + 2x2 pooling in HWC layout.
inline Eigen::VectorXd direct_layer(const LayerSpec& l, const Eigen::MatrixXd& w,
                                    const Eigen::VectorXd& x) {
  const Dims in = l.input;
  const int oh = (in.height - l.kernel_h) / l.stride + 1;
  const int ow = (in.width - l.kernel_w) / l.stride + 1;
  std::vector<double> conv(static_cast<std::size_t>(oh) * ow * l.out_channels, 0.0);
  auto cidx = [&](int y, int x_, int c) {
    return (static_cast<std::size_t>(y) * ow + x_) * l.out_channels + c;
  };
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int co = 0; co < l.out_channels; ++co) {
        double s = 0.0;
        for (int ky = 0; ky < l.kernel_h; ++ky)
          for (int kx = 0; kx < l.kernel_w; ++kx)
            for (int ci = 0; ci < in.channels; ++ci) {
              const int iy = oy * l.stride + ky;
              const int ix = ox * l.stride + kx;
              s += x((iy * in.width + ix) * in.channels + ci) *
                   w((ky * l.kernel_w + kx) * in.channels + ci, co);
            }
        conv[cidx(oy, ox, co)] = l.relu ? std::max(s, 0.0) : s;
      }
  if (!l.pool) return Eigen::Map<Eigen::VectorXd>(conv.data(), static_cast<Eigen::Index>(conv.size()));
  const int ph = oh / 2;
  const int pw = ow / 2;
  Eigen::VectorXd out(static_cast<Eigen::Index>(ph) * pw * l.out_channels);
  for (int py = 0; py < ph; ++py)
    for (int px = 0; px < pw; ++px)
      for (int c = 0; c < l.out_channels; ++c) {
        const double v[4] = {conv[cidx(2 * py, 2 * px, c)], conv[cidx(2 * py, 2 * px + 1, c)],
                             conv[cidx(2 * py + 1, 2 * px, c)],
                             conv[cidx(2 * py + 1, 2 * px + 1, c)]};
        out((py * pw + px) * l.out_channels + c) =
            *l.pool == PoolKind::max ? *std::max_element(v, v + 4) : (v[0] + v[1] + v[2] + v[3]) / 4;
      }
  return out;
}

inline Eigen::VectorXd direct_forward(const NetworkSpec& net, const WeightSet<double>& w,
                                      Eigen::VectorXd x) {
  for (std::size_t l = 0; l < net.depth(); ++l) x = direct_layer(net.layers[l], w[l], x);
  return x;
}

/// Scalar evaluation of cross-entropy + lambda * ||mask||^2 written out longhand.
inline double loss_oracle(const Eigen::VectorXd& logits, int target, double lambda,
                          const Eigen::VectorXd& mask) {
  double denom = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) denom += std::exp(logits(i));
  double norm = 0.0;
  for (Eigen::Index i = 0; i < mask.size(); ++i) norm += mask(i) * mask(i);
  return -std::log(std::exp(logits(target)) / denom) + lambda * norm;
}

inline double batch_loss(const NetworkSpec& net, const WeightSet<double>& w,
                         std::span<const Eigen::VectorXd> clean, const Eigen::VectorXd& mask) {
  double sum = 0.0;
  for (const auto& x : clean)
    sum += loss_oracle(direct_forward(net, w, x + mask), net.attack.target_label, 0.0, mask);
  return sum / static_cast<double>(clean.size()) + net.attack.lambda * mask.squaredNorm();
}

/// Activation pattern (ReLU bits and pool winners) of every image; FD is only valid where it
/// does not change.
inline std::vector<std::vector<int>> pattern(const NetworkSpec& net, const WeightSet<double>& w,
                                             std::span<const Eigen::VectorXd> clean,
                                             const Eigen::VectorXd& mask) {
  std::vector<std::vector<int>> out;
  for (const auto& x : clean) {
    const auto st = forward(net, w, Eigen::VectorXd(x + mask));
    std::vector<int> p;
    for (const auto& t : st.layers) {
      for (bool b : t.relu_bitmap) p.push_back(b);
      for (auto i : t.pool_index) p.push_back(i);
    }
    out.push_back(std::move(p));
  }
  return out;
}

struct FdResult {
  double max_rel_error = 0.0;
  int compared = 0;
  int skipped = 0;
};

/// Central finite differences of the batch loss against the analytic mask gradient.
/// Coordinates whose +-eps probe changes the activation pattern are skipped.
/// Relative error uses max(|a|, |b|, floor) as denominator.
inline FdResult fd_check(const NetworkSpec& net, const WeightSet<double>& w,
                         std::span<const Eigen::VectorXd> clean, const Eigen::VectorXd& mask,
                         double eps = 1e-4, double floor = 1e-5) {
  const auto analytic = loss_and_gradient(net, w, clean, mask, net.attack).gradient;
  const auto base = pattern(net, w, clean, mask);
  FdResult r;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    Eigen::VectorXd plus = mask;
    Eigen::VectorXd minus = mask;
    plus(i) += eps;
    minus(i) -= eps;
    if (pattern(net, w, clean, plus) != base || pattern(net, w, clean, minus) != base) {
      ++r.skipped;
      continue;
    }
    const double fd = (batch_loss(net, w, clean, plus) - batch_loss(net, w, clean, minus)) / (2 * eps);
    const double a = analytic(i);
    const double rel = std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), floor});
    r.max_rel_error = std::max(r.max_rel_error, rel);
    ++r.compared;
  }
  return r;
}

/// Largest curvature of the loss in the mask for a linear net: ||W||_2^2 / 2 + 2 lambda.
/// The softmax cross-entropy Hessian in the logits is bounded by 1/2 in operator norm.
inline double linear_smoothness(const Eigen::MatrixXd& w, double lambda) {
  const double s = Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0);
  return s * s / 2.0 + 2.0 * lambda;
}

}  // namespace a3::testing
