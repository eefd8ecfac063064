// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// Kolmogorov-Arnold layers and the opacity / covariance attribute heads.
//
// Every edge (q, p) of a layer carries a learnable univariate activation
//   phi(x) = w_b * silu(x) + w_s * sum_m c_m B_m(x)
// where B_m are degree-`order` B-splines on a uniform knot grid over [-1, 1]
// (inputs outside the grid are clamped before the spline is evaluated).
// Output neuron q sums phi_{q,p}(z_p) over all inputs p.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "pepgs/types.hpp"

namespace pepgs {

/// Uniform knot vector on [lo, hi] with `intervals` cells, extended by `order`
/// knots on either side.
VecX make_knots(int intervals, int order, Scalar lo = -1, Scalar hi = 1);

inline constexpr int kMaxSplineOrder = 7;
using SplineVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxSplineOrder + 1, 1>;

struct SplineEval {
  int first = 0;      // index of the first nonzero basis function
  SplineVec values;   // order + 1 nonzero basis values
  SplineVec derivs;   // their derivatives with respect to x (zero when clamped)
};

/// Nonzero B-spline basis values at x. `x` is clamped into the knot range
/// [knots[order], knots[size - 1 - order]].
SplineEval spline_eval(Scalar x, const VecX& knots, int order);

/// Full basis vector (size knots.size() - order - 1) at x.
VecX spline_basis(Scalar x, const VecX& knots, int order);

struct KanLayer {
  int n_in = 0, n_out = 0;
  int intervals = 5;
  int order = 3;
  VecX knots;
  RowMat coef;         // (n_out * n_in) x num_basis; row q * n_in + p
  MatX base_weight;    // n_out x n_in
  MatX spline_weight;  // n_out x n_in

  KanLayer() = default;
  KanLayer(int n_in, int n_out, int intervals = 5, int order = 3);
  int num_basis() const { return intervals + order; }

  template <class F>
  void visit(F&& f) {
    f(std::string("coef"), coef);
    f(std::string("base_weight"), base_weight);
    f(std::string("spline_weight"), spline_weight);
  }
  void init(std::mt19937_64& rng);
  void set_zero();
};

struct KanLayerCache {
  RowMat input;
  std::vector<SplineEval> basis;  // row-major over (row, p)
};

RowMat kan_layer_forward(const KanLayer& layer, const RowMat& z, KanLayerCache* cache = nullptr);
VecX kan_layer_forward(const KanLayer& layer, const VecX& z);
RowMat kan_layer_backward(const KanLayer& layer, const KanLayerCache& cache, const RowMat& grad_out,
                          KanLayer& grad);

struct KanNetwork {
  std::vector<KanLayer> layers;

  KanNetwork() = default;
  /// Widths [n0, n1, ..., nK] produce K layers.
  explicit KanNetwork(const std::vector<int>& widths, int intervals = 5, int order = 3);
  int in_dim() const { return layers.front().n_in; }
  int out_dim() const { return layers.back().n_out; }
  void validate() const;

  template <class F>
  void visit(F&& f) {
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].visit([&](const std::string& n, auto& m) { f("layer" + std::to_string(i) + "." + n, m); });
  }
  void init(std::mt19937_64& rng) {
    for (auto& l : layers) l.init(rng);
  }
  void set_zero() {
    for (auto& l : layers) l.set_zero();
  }
};

struct KanCache {
  std::vector<KanLayerCache> layers;
};

RowMat kan_forward(const KanNetwork& net, const RowMat& z, KanCache* cache = nullptr);
VecX kan_forward(const KanNetwork& net, const VecX& z);
RowMat kan_backward(const KanNetwork& net, const KanCache& cache, const RowMat& grad_out, KanNetwork& grad);

// ---- attribute heads ------------------------------------------------------

struct OpacityHead {
  KanNetwork net;
  Scalar tau = 0;
};

struct OpacityOutput {
  RowMat alpha;  // N x k, tanh range
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> keep;
};

/// Tanh of the raw head output plus the inclusive alpha >= tau retention mask.
OpacityOutput decode_opacity(const RowMat& raw, Scalar tau);
/// `f_in` rows are squashed by tanh before entering the network.
OpacityOutput opacity_head_forward(const OpacityHead& head, const RowMat& f_in);

struct CovarianceHead {
  KanNetwork net;
};

struct CovarianceOutput {
  RowMat scales;  // (N*k) x 3
  RowMat rotations;  // (N*k) x 4, unit (w, x, y, z)
  RowMat raw_rotations;
  std::vector<bool> fallback;
  int fallback_count = 0;
};

/// Per Gaussian j of anchor i: s = l_v * sigmoid(raw[7j..7j+2]),
/// q = normalize(raw[7j+3..7j+6]) with identity fallback for |q| < 1e-9.
CovarianceOutput decode_covariance(const RowMat& raw, const RowMat& base_scales);
CovarianceOutput covariance_head_forward(const CovarianceHead& head, const RowMat& f_in, const RowMat& base_scales);

/// Gradient of the raw head output given gradients on decoded scales and
/// unit quaternions; also accumulates d/d(base_scales) into `grad_base`.
RowMat decode_covariance_backward(const RowMat& raw, const RowMat& base_scales, const CovarianceOutput& out,
                                  const RowMat& grad_scales, const RowMat& grad_rotations, RowMat& grad_base);

}  // namespace pepgs
