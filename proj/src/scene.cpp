// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/scene.hpp"

#include <cmath>
#include <set>
#include <tuple>

#include "pepgs/random.hpp"

namespace pepgs {

void PointCloud::validate() const {
  if (points.empty()) throw Error("empty point cloud");
  for (const auto& p : points)
    if (!p.allFinite()) throw Error("non-finite point coordinate");
  if (!colors.empty() && colors.size() != points.size())
    throw Error("point colors must match point count");
}

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw Error("camera image size must be positive");
  if (!(fx > 0) || !(fy > 0)) throw Error("camera focal lengths must be positive");
  if (!rotation.allFinite() || !translation.allFinite()) throw Error("non-finite camera pose");
  const Scalar dev = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (dev > 1e-6) throw Error("camera rotation is not orthonormal");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       Scalar focal) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation.row(0) = right.transpose();
  cam.rotation.row(1) = down.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  return cam;
}

std::vector<Vec3> voxel_centers(const PointCloud& cloud, Scalar voxel) {
  cloud.validate();
  if (!(voxel > 0) || !std::isfinite(voxel)) throw Error("invalid voxel size");
  // nearbyint under the default rounding mode is round-half-to-even.
  std::set<std::tuple<long long, long long, long long>> cells;
  for (const auto& p : cloud.points) {
    cells.emplace(static_cast<long long>(std::nearbyint(p.x() / voxel)),
                  static_cast<long long>(std::nearbyint(p.y() / voxel)),
                  static_cast<long long>(std::nearbyint(p.z() / voxel)));
  }
  std::vector<Vec3> centers;
  centers.reserve(cells.size());
  for (const auto& [x, y, z] : cells)
    centers.emplace_back(static_cast<Scalar>(x) * voxel, static_cast<Scalar>(y) * voxel,
                         static_cast<Scalar>(z) * voxel);
  return centers;
}

std::vector<Anchor> voxelize_anchors(const PointCloud& cloud, Scalar voxel, int k, std::mt19937_64& rng) {
  if (k <= 0) throw Error("offset count must be positive");
  std::vector<Anchor> anchors;
  for (const Vec3& c : voxel_centers(cloud, voxel)) {
    Anchor a;
    a.position = c;
    for (int i = 0; i < kFeatureDim; ++i) a.feature(i) = uniform(rng, -0.01, 0.01);
    a.offsets.resize(k, 3);
    fill_uniform(a.offsets, rng, -0.5, 0.5);
    a.scale = Vec3::Constant(voxel);
    anchors.push_back(std::move(a));
  }
  return anchors;
}

ViewContext view_context(const Vec3& anchor_position, const Camera& camera) {
  const Vec3 delta = anchor_position - camera.position();
  const Scalar dist = delta.norm();
  if (!(dist >= 1e-9)) throw Error("degenerate view direction");
  return {dist, delta / dist};
}

void WeightNet::init(std::mt19937_64& rng) {
  const Scalar a1 = 1.0 / std::sqrt(4.0);
  const Scalar a2 = 1.0 / std::sqrt(static_cast<Scalar>(kHidden));
  fill_uniform(w1, rng, -a1, a1);
  fill_uniform(b1, rng, -a1, a1);
  fill_uniform(w2, rng, -a2, a2);
  fill_uniform(b2, rng, -a2, a2);
}

namespace {

// Every `stride`-th component, tiled back to full width.
VecX downsample_tile(const VecX& f, int stride) {
  const int kept = kFeatureDim / stride;
  VecX out(kFeatureDim);
  for (int i = 0; i < kFeatureDim; ++i) out(i) = f(stride * (i % kept));
  return out;
}

VecX downsample_tile_adjoint(const VecX& g, int stride) {
  const int kept = kFeatureDim / stride;
  VecX out = VecX::Zero(kFeatureDim);
  for (int i = 0; i < kFeatureDim; ++i) out(stride * (i % kept)) += g(i);
  return out;
}

}  // namespace

std::array<VecX, 3> feature_bank(const VecX& feature) {
  if (feature.size() != kFeatureDim) throw Error("anchor feature must have 32 components");
  return {feature, downsample_tile(feature, 2), downsample_tile(feature, 4)};
}

BankBlend blend_feature_bank(const VecX& feature, const ViewContext& ctx, const WeightNet& net) {
  BankBlend out;
  out.input << ctx.distance, ctx.direction;
  out.hidden = (net.w1 * out.input + net.b1).array().tanh();
  const Vec3 logits = net.w2 * out.hidden + net.b2;
  const Vec3 e = (logits.array() - logits.maxCoeff()).exp();
  out.weights = e / e.sum();
  const auto bank = feature_bank(feature);
  out.blended = out.weights(0) * bank[0] + out.weights(1) * bank[1] + out.weights(2) * bank[2];
  return out;
}

VecX blend_feature_bank_backward(const VecX& feature, const BankBlend& saved, const WeightNet& net,
                                 const VecX& grad_blended, WeightNet& grad_net) {
  const auto bank = feature_bank(feature);
  const Vec3& w = saved.weights;
  VecX grad_feature = w(0) * grad_blended + w(1) * downsample_tile_adjoint(grad_blended, 2) +
                      w(2) * downsample_tile_adjoint(grad_blended, 4);

  Vec3 grad_w(grad_blended.dot(bank[0]), grad_blended.dot(bank[1]), grad_blended.dot(bank[2]));
  const Vec3 grad_logits = w.cwiseProduct(grad_w.array().matrix() - Vec3::Constant(w.dot(grad_w)));
  grad_net.w2.noalias() += grad_logits * saved.hidden.transpose();
  grad_net.b2 += grad_logits;
  const VecX grad_pre =
      (net.w2.transpose() * grad_logits).array() * (1 - saved.hidden.array().square());
  grad_net.w1.noalias() += grad_pre * saved.input.transpose();
  grad_net.b1 += grad_pre;
  return grad_feature;
}

RowMat decode_positions(const Anchor& anchor) {
  RowMat means(anchor.offsets.rows(), 3);
  for (Eigen::Index i = 0; i < anchor.offsets.rows(); ++i)
    means.row(i) = anchor.position.transpose() +
                   anchor.offsets.row(i).cwiseProduct(anchor.scale.transpose());
  return means;
}

CovarianceGrad compose_covariance_backward(const Vec3& s, const Vec4& q, const Mat3& grad_sigma) {
  const Scalar n = q.norm();
  if (!(n > 0)) throw Error("degenerate rotation");
  const Vec4 qn = q / n;
  const Mat3 r = quaternion_to_rotation<Scalar>(qn);
  const Mat3 g = 0.5 * (grad_sigma + grad_sigma.transpose());
  const Vec3 var = s.array().square();

  CovarianceGrad out;
  const Mat3 rt_g_r = r.transpose() * g * r;
  out.scale = 2 * s.cwiseProduct(rt_g_r.diagonal());

  // dL/dR for Sigma = R D R^T with symmetric G is 2 G R D. The variance floor
  // shifts D by a multiple of I, whose contribution R I R^T = I is rotation-free.
  const Mat3 grad_r = 2 * g * r * var.asDiagonal();
  const Scalar w = qn(0), x = qn(1), y = qn(2), z = qn(3);
  Mat3 dw, dx, dy, dz;
  dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  const Vec4 grad_qn(grad_r.cwiseProduct(dw).sum(), grad_r.cwiseProduct(dx).sum(),
                     grad_r.cwiseProduct(dy).sum(), grad_r.cwiseProduct(dz).sum());
  out.rotation = (grad_qn - qn * qn.dot(grad_qn)) / n;
  return out;
}

Scalar gaussian_density(const Vec3& x, const NeuralGaussian& g) {
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(g.covariance, Eigen::EigenvaluesOnly);
  const Vec3 ev = eig.eigenvalues();
  if (!(ev(0) > 0) || ev(2) / ev(0) >= 1e12) throw Error("singular covariance");
  const Vec3 d = x - g.mean;
  const Scalar quad = d.dot(g.covariance.ldlt().solve(d));
  return std::exp(-0.5 * quad);
}

}  // namespace pepgs
