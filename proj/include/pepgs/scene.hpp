// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pepgs/types.hpp"

namespace pepgs {

struct PointCloud {
  std::vector<Vec3> points;
  // Empty, or one RGB triple per point.
  std::vector<Vec3> colors;

  void validate() const;
};

/// A voxel-center record. `offsets` holds one offset per row (k x 3).
struct Anchor {
  Vec3 position = Vec3::Zero();
  VecX feature = VecX::Zero(kFeatureDim);
  Vec3 scale = Vec3::Ones();
  RowMat offsets;
};

struct Camera {
  int width = 0;
  int height = 0;
  Scalar fx = 1, fy = 1, cx = 0, cy = 0;
  // World-to-camera: x_cam = rotation * x_world + translation.
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  std::string image_file;

  Vec3 position() const { return -rotation.transpose() * translation; }
  void validate() const;

  /// Camera at `eye` looking toward `target`; +y of the image points down.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                        Scalar focal);
};

struct ViewContext {
  Scalar distance = 0;
  Vec3 direction = Vec3::UnitX();
};

struct NeuralGaussian {
  Vec3 mean = Vec3::Zero();
  Scalar opacity = 0;
  Vec3 color = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Vec4 rotation = Vec4(1, 0, 0, 0);  // (w, x, y, z)
  Mat3 covariance = Mat3::Identity();
};

/// Round-half-to-even snapping of every point to a grid of spacing `voxel`,
/// deduplicated and sorted by (x, y, z). Features, offsets, and scales are
/// initialized from `rng`.
std::vector<Anchor> voxelize_anchors(const PointCloud& cloud, Scalar voxel, int k, std::mt19937_64& rng);

/// Snapped voxel centers only, no parameter initialization.
std::vector<Vec3> voxel_centers(const PointCloud& cloud, Scalar voxel);

ViewContext view_context(const Vec3& anchor_position, const Camera& camera);
inline ViewContext view_context(const Anchor& anchor, const Camera& camera) {
  return view_context(anchor.position, camera);
}

/// Small tanh MLP mapping (distance, direction) to three bank logits.
struct WeightNet {
  static constexpr int kHidden = 8;
  MatX w1 = MatX::Zero(kHidden, 4);
  VecX b1 = VecX::Zero(kHidden);
  MatX w2 = MatX::Zero(3, kHidden);
  VecX b2 = VecX::Zero(3);

  template <class F>
  void visit(F&& f) {
    f("w1", w1);
    f("b1", b1);
    f("w2", w2);
    f("b2", b2);
  }
  void init(std::mt19937_64& rng);
};

/// The three feature-bank entries {f, f down 1, f down 2}.
std::array<VecX, 3> feature_bank(const VecX& feature);

struct BankBlend {
  VecX blended;
  Vec3 weights;
  // Saved for backward.
  Vec4 input;
  VecX hidden;
};

BankBlend blend_feature_bank(const VecX& feature, const ViewContext& ctx, const WeightNet& net);

/// Accumulates weight-net gradients into `grad_net`; returns d(loss)/d(feature).
VecX blend_feature_bank_backward(const VecX& feature, const BankBlend& saved, const WeightNet& net,
                                 const VecX& grad_blended, WeightNet& grad_net);

/// mu_i = position + offset_i * scale (componentwise), one row per offset.
RowMat decode_positions(const Anchor& anchor);

template <class T>
Eigen::Matrix<T, 3, 3> quaternion_to_rotation(const Eigen::Matrix<T, 4, 1>& q) {
  const T w = q(0), x = q(1), y = q(2), z = q(3);
  Eigen::Matrix<T, 3, 3> r;
  r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
      T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
      T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
  return r;
}

/// Sigma = R(q) diag(s^2 + variance_floor) R(q)^T. `q` is normalized internally.
template <class T>
Eigen::Matrix<T, 3, 3> compose_covariance(const Eigen::Matrix<T, 3, 1>& s, const Eigen::Matrix<T, 4, 1>& q,
                                          T variance_floor = T(0)) {
  const T n = q.norm();
  if (!(n > T(0))) throw Error("degenerate rotation");
  const Eigen::Matrix<T, 3, 3> r = quaternion_to_rotation<T>(q / n);
  const Eigen::Matrix<T, 3, 1> var = s.array().square() + variance_floor;
  Eigen::Matrix<T, 3, 3> sigma = r * var.asDiagonal() * r.transpose();
  return T(0.5) * (sigma + sigma.transpose());
}

struct CovarianceGrad {
  Vec3 scale;
  Vec4 rotation;  // w.r.t. the unnormalized quaternion
};

/// `grad_sigma` is the symmetric gradient matrix dL/dSigma.
CovarianceGrad compose_covariance_backward(const Vec3& s, const Vec4& q, const Mat3& grad_sigma);

/// exp(-1/2 (x - mu)^T Sigma^-1 (x - mu)).
Scalar gaussian_density(const Vec3& x, const NeuralGaussian& g);

}  // namespace pepgs
