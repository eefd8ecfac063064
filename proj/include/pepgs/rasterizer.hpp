// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// EWA projection of 3D Gaussians and front-to-back alpha compositing.
//
// Pixel centers sit at integer coordinates. A splat contributes to a pixel
// only inside its 99% ellipse (Mahalanobis distance squared <= kExtentChi2);
// the same test drives frustum culling and the per-tile splat lists, so the
// tiled and per-pixel compositors see exactly the same contributions.

#pragma once

#include <optional>
#include <vector>

#include "pepgs/image.hpp"
#include "pepgs/scene.hpp"

namespace pepgs {

inline constexpr Scalar kNearPlane = 0.01;
inline constexpr Scalar kLowPass = 0.3;
inline constexpr Scalar kExtentChi2 = 9.21;  // 99% quantile, chi-square with 2 dof
inline constexpr Scalar kMinTransmittance = 1e-4;
inline constexpr int kTileSize = 16;

struct SplattedGaussian {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  Scalar depth = 1;
  Scalar opacity = 0;
  Vec3 color = Vec3::Zero();
  int source = -1;  // caller-defined id, e.g. index of the neural Gaussian
};

struct SplatGrad {
  Vec2 mean = Vec2::Zero();
  Vec3 cov = Vec3::Zero();  // d/d(xx), d/d(xy) (both off-diagonal entries together), d/d(yy)
  Scalar opacity = 0;
  Vec3 color = Vec3::Zero();
};

/// Symmetric gradient matrix G with dL = sum_ij G_ij dSigma_ij.
inline Mat2 cov_grad_matrix(const Vec3& g) {
  Mat2 m;
  m << g(0), 0.5 * g(1), 0.5 * g(1), g(2);
  return m;
}

/// Returns nullopt when the Gaussian is behind the near plane or its 99%
/// extent misses every pixel center of the frame.
std::optional<SplattedGaussian> project(const NeuralGaussian& g, const Camera& camera);

struct ProjectGrad {
  Vec3 mean = Vec3::Zero();
  Mat3 cov = Mat3::Zero();  // symmetric
};

ProjectGrad project_backward(const NeuralGaussian& g, const Camera& camera, const SplatGrad& grad);

struct RasterOptions {
  int tile_size = kTileSize;
  int threads = 1;
};

/// Stable front-to-back order (depth ascending, ties by input index).
std::vector<int> depth_order(const std::vector<SplattedGaussian>& splats);

ImageBuffer rasterize(const std::vector<SplattedGaussian>& splats, int width, int height, const Vec3& background,
                      const RasterOptions& options = {});

/// Reference compositor: every pixel walks the full sorted splat list.
ImageBuffer rasterize_naive(const std::vector<SplattedGaussian>& splats, int width, int height,
                            const Vec3& background);

/// Gradients per input splat (same order as `splats`). `grad_image` holds
/// dL/dC per pixel and channel; pixels that terminated early pass nothing to
/// the splats behind the termination point.
std::vector<SplatGrad> rasterize_backward(const std::vector<SplattedGaussian>& splats, int width, int height,
                                          const Vec3& background, const ImageBuffer& grad_image,
                                          const RasterOptions& options = {});

/// Gaussian falloff exp(-1/2 d^T Sigma'^-1 d) at pixel center (x, y), without truncation.
Scalar splat_falloff(const SplattedGaussian& s, Scalar x, Scalar y);

}  // namespace pepgs
