// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "pepgs/image.hpp"

namespace pepgs {

struct LossWeights {
  Scalar dssim = 0.2;
  Scalar vol = 0.01;
  Scalar nlpd = 0.2;
  bool use_l1 = false;  // swap the squared-error term for absolute error

  void validate() const;
};

struct LaplacianPyramid {
  // bands[0..k-2] are band-pass residuals, bands[k-1] the coarsest low-pass.
  std::vector<RowMat> bands;
  int scales() const { return static_cast<int>(bands.size()); }
};

struct NlpdParams {
  Scalar sigma = 0.1;  // per-scale noise floor, same at every scale
  int scales = 0;      // 0 selects min(5, floor(log2(min(W, H))))
};

/// Gradients are written only when the output pointer is non-null.
Scalar l2_loss(const ImageBuffer& render, const ImageBuffer& gt, ImageBuffer* grad = nullptr);
Scalar l1_loss(const ImageBuffer& render, const ImageBuffer& gt, ImageBuffer* grad = nullptr);

/// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5),
/// zero-padded "same" filtering, C1 = 0.01^2, C2 = 0.03^2.
Scalar ssim(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad_a = nullptr);
/// (1 - SSIM) / 2.
Scalar dssim_loss(const ImageBuffer& render, const ImageBuffer& gt, ImageBuffer* grad = nullptr);

/// Sum over rows of s_x * s_y * s_z.
Scalar volume_loss(const RowMat& scales, RowMat* grad = nullptr);

int default_pyramid_scales(int width, int height);
LaplacianPyramid build_pyramid(const RowMat& plane, int scales);
RowMat collapse_pyramid(const LaplacianPyramid& pyr);

/// Adjoint of build_pyramid: maps band gradients back to the source plane.
RowMat build_pyramid_adjoint(const std::vector<RowMat>& band_grads, int height, int width);

Scalar nlpd_loss(const ImageBuffer& render, const ImageBuffer& gt, const NlpdParams& params = {},
                 ImageBuffer* grad = nullptr);

struct LossBreakdown {
  Scalar total = 0;
  Scalar recon = 0;  // L2 (or L1 when selected)
  Scalar dssim = 0;
  Scalar vol = 0;
  Scalar nlpd = 0;
  Scalar base = 0;  // (1-l_d) recon + l_d dssim + l_v vol
};

/// ((1-l_d) L_recon + l_d L_dssim + l_v L_vol) (1 - l_n) + l_n L_nlpd.
LossBreakdown total_loss(const ImageBuffer& render, const ImageBuffer& gt, const RowMat& scales,
                         const LossWeights& weights, const NlpdParams& nlpd = {}, ImageBuffer* grad_image = nullptr,
                         RowMat* grad_scales = nullptr);

/// -10 log10(MSE), capped at 100 dB when MSE < 1e-10.
Scalar psnr(const ImageBuffer& render, const ImageBuffer& gt);

}  // namespace pepgs
