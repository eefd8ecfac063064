// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "pepgs/model.hpp"

namespace pepgs {

struct AdamConfig {
  Scalar lr_feature = 2.5e-3;
  Scalar lr_offset = 1e-2;
  Scalar lr_scale = 7e-3;
  Scalar lr_head = 2e-3;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-15;

  Scalar lr(ParamGroup g) const;
};

/// One Adam update of a single tensor at step `t` (1-based); `m` and `v` hold the moments.
template <class P, class G>
void adam_update(Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad, MatX& m, MatX& v, Scalar lr, int t,
                 const AdamConfig& c) {
  const Scalar bc1 = 1 - std::pow(c.beta1, t);
  const Scalar bc2 = 1 - std::pow(c.beta2, t);
  m = c.beta1 * m + (1 - c.beta1) * grad;
  v = c.beta2 * v + (1 - c.beta2) * grad.cwiseProduct(grad);
  param -= (lr * (m / bc1).array() / ((v / bc2).array().sqrt() + c.eps)).matrix();
}

/// Rounds every entry to the nearest float32 so checkpoints store parameters exactly.
void round_to_float(Model& model);

/// Throws Error naming the first tensor holding a NaN or infinity.
void check_finite(Model& grad, const char* what = "gradient");

class Adam {
 public:
  Adam(Model& model, const AdamConfig& config = {});

  /// One update from `grad`; parameters are rounded to float32 afterwards.
  void step(Model& model, Model& grad);
  int steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<MatX> m_, v_;
  int t_ = 0;
};

}  // namespace pepgs
