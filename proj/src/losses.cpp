// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pepgs {

void LossWeights::validate() const {
  for (Scalar w : {dssim, vol, nlpd})
    if (!(w >= 0 && w <= 1)) throw Error("loss weights must lie in [0, 1]");
  if (!(nlpd < 1)) throw Error("lambda_nlpd must be below 1");
}

namespace {

void check_same(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw Error("image dimension mismatch");
  if (a.width <= 0 || a.height <= 0) throw Error("empty image");
}

ImageBuffer zeros_like(const ImageBuffer& a) { return ImageBuffer(a.width, a.height); }

// ---- 1D linear operators along rows / columns -----------------------------

int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

template <class Op>
RowMat along_rows(const RowMat& m, int out_cols, Op op) {
  RowMat out(m.rows(), out_cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    VecX in = m.row(r).transpose();
    out.row(r) = op(in, out_cols).transpose();
  }
  return out;
}

template <class Op>
RowMat along_cols(const RowMat& m, int out_rows, Op op) {
  RowMat out(out_rows, m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    VecX in = m.col(c);
    out.col(c) = op(in, out_rows);
  }
  return out;
}

// y[i] = sum_t k[t] x[i + t - r]; `reflect_pad` selects mirror padding, else zeros.
VecX correlate(const VecX& x, const VecX& k, bool reflect_pad) {
  const int n = static_cast<int>(x.size()), r = static_cast<int>(k.size()) / 2;
  VecX y = VecX::Zero(n);
  for (int i = 0; i < n; ++i) {
    Scalar acc = 0;
    for (int t = 0; t < k.size(); ++t) {
      int j = i + t - r;
      if (reflect_pad) {
        j = reflect(j, n);
      } else if (j < 0 || j >= n) {
        continue;
      }
      acc += k(t) * x(j);
    }
    y(i) = acc;
  }
  return y;
}

VecX correlate_adjoint(const VecX& g, const VecX& k, bool reflect_pad) {
  const int n = static_cast<int>(g.size()), r = static_cast<int>(k.size()) / 2;
  VecX x = VecX::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < k.size(); ++t) {
      int j = i + t - r;
      if (reflect_pad) {
        j = reflect(j, n);
      } else if (j < 0 || j >= n) {
        continue;
      }
      x(j) += k(t) * g(i);
    }
  }
  return x;
}

RowMat filter2d(const RowMat& m, const VecX& k, bool reflect_pad) {
  auto op = [&](const VecX& v, int) { return correlate(v, k, reflect_pad); };
  return along_cols(along_rows(m, static_cast<int>(m.cols()), op), static_cast<int>(m.rows()), op);
}

RowMat filter2d_adjoint(const RowMat& m, const VecX& k, bool reflect_pad) {
  auto op = [&](const VecX& v, int) { return correlate_adjoint(v, k, reflect_pad); };
  return along_rows(along_cols(m, static_cast<int>(m.rows()), op), static_cast<int>(m.cols()), op);
}

const VecX& gaussian_window() {
  static const VecX w = [] {
    VecX k(11);
    for (int i = 0; i < 11; ++i) k(i) = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
    return VecX(k / k.sum());
  }();
  return w;
}

const VecX& binomial5() {
  static const VecX k = (VecX(5) << 1, 4, 6, 4, 1).finished() / 16.0;
  return k;
}

const VecX& box3() {
  static const VecX k = VecX::Constant(3, 1.0 / 3.0);
  return k;
}

int half_size(int n) { return (n + 1) / 2; }

// Pyramid reduce: binomial blur with mirror padding, keep even samples.
RowMat pyr_down(const RowMat& m) {
  const RowMat b = filter2d(m, binomial5(), true);
  RowMat out(half_size(static_cast<int>(m.rows())), half_size(static_cast<int>(m.cols())));
  for (Eigen::Index y = 0; y < out.rows(); ++y)
    for (Eigen::Index x = 0; x < out.cols(); ++x) out(y, x) = b(2 * y, 2 * x);
  return out;
}

RowMat pyr_down_adjoint(const RowMat& g, int rows, int cols) {
  RowMat up = RowMat::Zero(rows, cols);
  for (Eigen::Index y = 0; y < g.rows(); ++y)
    for (Eigen::Index x = 0; x < g.cols(); ++x) up(2 * y, 2 * x) = g(y, x);
  return filter2d_adjoint(up, binomial5(), true);
}

// Pyramid expand to rows x cols: zero insertion then blur with gain 4.
RowMat pyr_up(const RowMat& m, int rows, int cols) {
  RowMat z = RowMat::Zero(rows, cols);
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x) z(2 * y, 2 * x) = m(y, x);
  return 4 * filter2d(z, binomial5(), true);
}

RowMat pyr_up_adjoint(const RowMat& g, int rows, int cols) {
  const RowMat b = 4 * filter2d_adjoint(g, binomial5(), true);
  RowMat out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y)
    for (Eigen::Index x = 0; x < cols; ++x) out(y, x) = b(2 * y, 2 * x);
  return out;
}

}  // namespace

Scalar l2_loss(const ImageBuffer& render, const ImageBuffer& gt, ImageBuffer* grad) {
  check_same(render, gt);
  const Scalar n = 3.0 * render.width * render.height;
  Scalar sum = 0;
  if (grad) *grad = zeros_like(render);
  for (int k = 0; k < 3; ++k) {
    const RowMat d = render.channels[k] - gt.channels[k];
    sum += d.squaredNorm();
    if (grad) grad->channels[k] = (2.0 / n) * d;
  }
  return sum / n;
}

Scalar l1_loss(const ImageBuffer& render, const ImageBuffer& gt, ImageBuffer* grad) {
  check_same(render, gt);
  const Scalar n = 3.0 * render.width * render.height;
  Scalar sum = 0;
  if (grad) *grad = zeros_like(render);
  for (int k = 0; k < 3; ++k) {
    const RowMat d = render.channels[k] - gt.channels[k];
    sum += d.cwiseAbs().sum();
    if (grad) grad->channels[k] = d.unaryExpr([n](Scalar v) { return Scalar((v > 0) - (v < 0)) / n; });
  }
  return sum / n;
}

Scalar ssim(const ImageBuffer& a, const ImageBuffer& b, ImageBuffer* grad_a) {
  check_same(a, b);
  constexpr Scalar c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const VecX& w = gaussian_window();
  const Scalar n = 3.0 * a.width * a.height;
  if (grad_a) *grad_a = zeros_like(a);
  Scalar total = 0;
  for (int k = 0; k < 3; ++k) {
    const RowMat& x = a.channels[k];
    const RowMat& y = b.channels[k];
    const RowMat mx = filter2d(x, w, false), my = filter2d(y, w, false);
    const RowMat sxx = filter2d(x.cwiseProduct(x), w, false) - mx.cwiseProduct(mx);
    const RowMat syy = filter2d(y.cwiseProduct(y), w, false) - my.cwiseProduct(my);
    const RowMat sxy = filter2d(x.cwiseProduct(y), w, false) - mx.cwiseProduct(my);
    const auto a1 = 2 * mx.array() * my.array() + c1;
    const auto a2 = 2 * sxy.array() + c2;
    const auto b1 = mx.array().square() + my.array().square() + c1;
    const auto b2 = sxx.array() + syy.array() + c2;
    const RowMat s = (a1 * a2) / (b1 * b2);
    total += s.sum();
    if (grad_a) {
      // Per map entry partials of the mean, then scattered back through the window.
      const RowMat dmx = ((2 * my.array() * a2) / (b1 * b2) - s.array() * 2 * mx.array() / b1) / n;
      const RowMat dsxx = (-s.array() / b2) / n;
      const RowMat dsxy = (2 * a1 / (b1 * b2)) / n;
      RowMat g = filter2d_adjoint(dmx, w, false);
      g += 2 * x.cwiseProduct(filter2d_adjoint(dsxx, w, false));
      g -= 2 * filter2d_adjoint(RowMat(dsxx.cwiseProduct(mx)), w, false);
      g += y.cwiseProduct(filter2d_adjoint(dsxy, w, false));
      g -= filter2d_adjoint(RowMat(dsxy.cwiseProduct(my)), w, false);
      grad_a->channels[k] = g;
    }
  }
  return total / n;
}

Scalar dssim_loss(const ImageBuffer& render, const ImageBuffer& gt, ImageBuffer* grad) {
  const Scalar s = ssim(render, gt, grad);
  if (grad)
    for (auto& c : grad->channels) c *= -0.5;
  return (1 - s) / 2;
}

Scalar volume_loss(const RowMat& scales, RowMat* grad) {
  if (scales.rows() > 0 && scales.cols() != 3) throw Error("scales must have three columns");
  Scalar sum = 0;
  if (grad) grad->resize(scales.rows(), 3);
  for (Eigen::Index i = 0; i < scales.rows(); ++i) {
    const Scalar a = scales(i, 0), b = scales(i, 1), c = scales(i, 2);
    sum += a * b * c;
    if (grad) grad->row(i) << b * c, a * c, a * b;
  }
  return sum;
}

int default_pyramid_scales(int width, int height) {
  const int m = std::min(width, height);
  if (m < 1) throw Error("empty image");
  return std::min(5, static_cast<int>(std::floor(std::log2(static_cast<Scalar>(m)))));
}

LaplacianPyramid build_pyramid(const RowMat& plane, int scales) {
  if (scales < 1) throw Error("pyramid needs at least one scale");
  const Eigen::Index m = std::min(plane.rows(), plane.cols());
  if (m < (Eigen::Index{1} << (scales - 1))) throw Error("image too small for pyramid depth");
  LaplacianPyramid pyr;
  RowMat level = plane;
  for (int i = 0; i + 1 < scales; ++i) {
    RowMat next = pyr_down(level);
    pyr.bands.push_back(level - pyr_up(next, static_cast<int>(level.rows()), static_cast<int>(level.cols())));
    level = std::move(next);
  }
  pyr.bands.push_back(std::move(level));
  return pyr;
}

RowMat collapse_pyramid(const LaplacianPyramid& pyr) {
  if (pyr.bands.empty()) throw Error("empty pyramid");
  RowMat cur = pyr.bands.back();
  for (int i = pyr.scales() - 2; i >= 0; --i) {
    const RowMat& band = pyr.bands[i];
    cur = band + pyr_up(cur, static_cast<int>(band.rows()), static_cast<int>(band.cols()));
  }
  return cur;
}

RowMat build_pyramid_adjoint(const std::vector<RowMat>& band_grads, int height, int width) {
  const int k = static_cast<int>(band_grads.size());
  std::vector<std::pair<int, int>> sizes{{height, width}};
  for (int i = 1; i < k; ++i) sizes.emplace_back(half_size(sizes.back().first), half_size(sizes.back().second));
  // Walk from the coarsest level back to the source.
  RowMat g = band_grads[k - 1];
  for (int i = k - 2; i >= 0; --i) {
    // level_{i+1} receives -up^T(dR_i) in addition to what came from coarser levels.
    g -= pyr_up_adjoint(band_grads[i], sizes[i + 1].first, sizes[i + 1].second);
    g = band_grads[i] + pyr_down_adjoint(g, sizes[i].first, sizes[i].second);
  }
  return g;
}

Scalar nlpd_loss(const ImageBuffer& render, const ImageBuffer& gt, const NlpdParams& params, ImageBuffer* grad) {
  check_same(render, gt);
  if (!(params.sigma > 0)) throw Error("NLPD noise parameter must be positive");
  const int k = params.scales > 0 ? params.scales : default_pyramid_scales(render.width, render.height);
  if (grad) *grad = zeros_like(render);
  Scalar total = 0;
  for (int c = 0; c < 3; ++c) {
    const LaplacianPyramid px = build_pyramid(render.channels[c], k);
    const LaplacianPyramid py = build_pyramid(gt.channels[c], k);
    std::vector<RowMat> band_grads;
    for (int i = 0; i < k; ++i) {
      const RowMat& rx = px.bands[i];
      const RowMat& ry = py.bands[i];
      const RowMat denx = (params.sigma + filter2d(rx.cwiseAbs(), box3(), true).array()).matrix();
      const RowMat deny = (params.sigma + filter2d(ry.cwiseAbs(), box3(), true).array()).matrix();
      const RowMat diff = rx.cwiseQuotient(denx) - ry.cwiseQuotient(deny);
      const Scalar count = static_cast<Scalar>(diff.size());
      const Scalar dist = std::sqrt(diff.squaredNorm() / count);
      total += dist;
      if (grad) {
        RowMat dr = RowMat::Zero(rx.rows(), rx.cols());
        if (dist > 0) {
          const Scalar scale = 1.0 / (3.0 * k);
          const RowMat dnorm = diff * (scale / (count * dist));
          dr = dnorm.cwiseQuotient(denx);
          const RowMat dden = -(dnorm.array() * rx.array() / denx.array().square()).matrix();
          const RowMat dabs = filter2d_adjoint(dden, box3(), true);
          dr += dabs.cwiseProduct(rx.unaryExpr([](Scalar v) { return Scalar((v > 0) - (v < 0)); }));
        }
        band_grads.push_back(std::move(dr));
      }
    }
    if (grad) grad->channels[c] = build_pyramid_adjoint(band_grads, render.height, render.width);
  }
  return total / (3.0 * k);
}

LossBreakdown total_loss(const ImageBuffer& render, const ImageBuffer& gt, const RowMat& scales,
                         const LossWeights& wts, const NlpdParams& nlpd, ImageBuffer* grad_image,
                         RowMat* grad_scales) {
  wts.validate();
  LossBreakdown out;
  ImageBuffer g_recon, g_dssim, g_nlpd;
  const bool want = grad_image != nullptr;
  out.recon = wts.use_l1 ? l1_loss(render, gt, want ? &g_recon : nullptr)
                         : l2_loss(render, gt, want ? &g_recon : nullptr);
  out.dssim = dssim_loss(render, gt, want ? &g_dssim : nullptr);
  out.vol = volume_loss(scales, grad_scales);
  out.nlpd = nlpd_loss(render, gt, nlpd, want ? &g_nlpd : nullptr);
  out.base = (1 - wts.dssim) * out.recon + wts.dssim * out.dssim + wts.vol * out.vol;
  out.total = out.base * (1 - wts.nlpd) + wts.nlpd * out.nlpd;

  const Scalar keep = 1 - wts.nlpd;
  if (grad_image) {
    *grad_image = zeros_like(render);
    for (int c = 0; c < 3; ++c)
      grad_image->channels[c] = keep * ((1 - wts.dssim) * g_recon.channels[c] + wts.dssim * g_dssim.channels[c]) +
                                wts.nlpd * g_nlpd.channels[c];
  }
  if (grad_scales) *grad_scales *= keep * wts.vol;
  return out;
}

Scalar psnr(const ImageBuffer& render, const ImageBuffer& gt) {
  const Scalar mse = l2_loss(render, gt);
  if (mse < 1e-10) return 100.0;
  return -10.0 * std::log10(mse);
}

}  // namespace pepgs
