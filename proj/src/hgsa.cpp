// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/hgsa.hpp"

#include <cmath>

#include "pepgs/random.hpp"

namespace pepgs {

namespace {

constexpr int G = kGridSide;

Scalar sigmoid(Scalar x) { return 1 / (1 + std::exp(-x)); }

// Width-3 convolution with zero padding of one on each side.
Eigen::Matrix<Scalar, G, 1> conv3(const Eigen::Matrix<Scalar, G, 1>& z, const VecX& k, Scalar b) {
  Eigen::Matrix<Scalar, G, 1> u;
  for (int i = 0; i < G; ++i) {
    Scalar acc = b;
    for (int t = -1; t <= 1; ++t) {
      const int j = i + t;
      if (j >= 0 && j < G) acc += k(t + 1) * z(j);
    }
    u(i) = acc;
  }
  return u;
}

// Normalizes `u` in place; returns 1/sqrt(var + eps).
Scalar normalize(Eigen::Matrix<Scalar, G, 1>& u) {
  const Scalar mean = u.mean();
  u.array() -= mean;
  const Scalar rstd = 1 / std::sqrt(u.squaredNorm() / G + kNormEps);
  u *= rstd;
  return rstd;
}

// Backward through x_hat = (x - mean) * rstd for a single vector.
template <class V>
V normalize_backward(const V& xhat, Scalar rstd, const V& grad_xhat) {
  const Scalar n = static_cast<Scalar>(xhat.size());
  const Scalar mean_g = grad_xhat.sum() / n;
  const Scalar mean_gx = grad_xhat.dot(xhat) / n;
  return rstd * (grad_xhat.array() - mean_g - xhat.array() * mean_gx).matrix();
}

}  // namespace

void GranularParams::init(std::mt19937_64& rng) {
  const Scalar a = 1 / std::sqrt(3.0);
  fill_uniform(kernel_h, rng, -a, a);
  fill_uniform(bias_h, rng, -a, a);
  fill_uniform(kernel_w, rng, -a, a);
  fill_uniform(bias_w, rng, -a, a);
  gain_h.setOnes();
  gain_w.setOnes();
  shift_h.setZero();
  shift_w.setZero();
}

void GranularParams::set_zero() {
  visit([](const auto&, auto& m) { m.setZero(); });
}

StructuralParams::StructuralParams(int heads_) : heads(heads_) {
  if (heads <= 0 || heads > kInputDim) throw Error("invalid attention head count");
  head_dim = kInputDim / heads;
  wq = MatX::Zero(inner_dim(), kInputDim);
  wk = MatX::Zero(inner_dim(), kInputDim);
  wv = MatX::Zero(inner_dim(), kInputDim);
  wo = MatX::Zero(kInputDim, inner_dim());
}

void StructuralParams::init(std::mt19937_64& rng) {
  const Scalar a = 1 / std::sqrt(static_cast<Scalar>(kInputDim));
  const Scalar b = 1 / std::sqrt(static_cast<Scalar>(inner_dim()));
  fill_uniform(wq, rng, -a, a);
  fill_uniform(wk, rng, -a, a);
  fill_uniform(wv, rng, -a, a);
  fill_uniform(wo, rng, -b, b);
  ln_gain.setOnes();
  ln_bias.setZero();
}

void StructuralParams::set_zero() {
  visit([](const auto&, auto& m) { m.setZero(); });
}

void ColorHeadParams::init(std::mt19937_64& rng) {
  const Scalar a = 1 / std::sqrt(static_cast<Scalar>(kInputDim));
  fill_uniform(weight, rng, -a, a);
  fill_uniform(bias, rng, -a, a);
}

void ColorHeadParams::set_zero() {
  weight.setZero();
  bias.setZero();
}

RowMat granular_attention(const RowMat& f_in, const GranularParams& p, GranularCache* cache) {
  if (f_in.cols() != kInputDim) throw Error("HGSA input must have 36 columns");
  if (!f_in.allFinite()) throw Error("HGSA input must be finite");
  const Eigen::Index n = f_in.rows();
  RowMat out(n, kInputDim);
  if (cache) {
    cache->input = f_in;
    for (RowMat* m : {&cache->pooled_h, &cache->pooled_w, &cache->norm_h, &cache->norm_w, &cache->gate_h,
                      &cache->gate_w})
      m->resize(n, G);
    cache->rstd_h.resize(n);
    cache->rstd_w.resize(n);
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Map<const Eigen::Matrix<Scalar, G, G, Eigen::RowMajor>> grid(f_in.row(r).data());
    // z^h averages along each grid row, z^w down each grid column.
    const Eigen::Matrix<Scalar, G, 1> zh = grid.rowwise().mean();
    const Eigen::Matrix<Scalar, G, 1> zw = grid.colwise().mean().transpose();
    Eigen::Matrix<Scalar, G, 1> nh = conv3(zh, p.kernel_h, p.bias_h(0));
    Eigen::Matrix<Scalar, G, 1> nw = conv3(zw, p.kernel_w, p.bias_w(0));
    const Scalar rh = normalize(nh);
    const Scalar rw = normalize(nw);
    Eigen::Matrix<Scalar, G, 1> yh, yw;
    for (int i = 0; i < G; ++i) {
      yh(i) = sigmoid(p.gain_h(i) * nh(i) + p.shift_h(i));
      yw(i) = sigmoid(p.gain_w(i) * nw(i) + p.shift_w(i));
    }
    Eigen::Map<Eigen::Matrix<Scalar, G, G, Eigen::RowMajor>> dst(out.row(r).data());
    dst = (yh * yw.transpose()).cwiseProduct(grid);
    if (cache) {
      cache->pooled_h.row(r) = zh.transpose();
      cache->pooled_w.row(r) = zw.transpose();
      cache->norm_h.row(r) = nh.transpose();
      cache->norm_w.row(r) = nw.transpose();
      cache->rstd_h(r) = rh;
      cache->rstd_w(r) = rw;
      cache->gate_h.row(r) = yh.transpose();
      cache->gate_w.row(r) = yw.transpose();
    }
  }
  return out;
}

RowMat granular_attention_backward(const GranularCache& c, const GranularParams& p, const RowMat& grad_out,
                                   GranularParams& grad) {
  const Eigen::Index n = c.input.rows();
  RowMat grad_in(n, kInputDim);
  using Vg = Eigen::Matrix<Scalar, G, 1>;
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Map<const Eigen::Matrix<Scalar, G, G, Eigen::RowMajor>> x(c.input.row(r).data());
    const Eigen::Map<const Eigen::Matrix<Scalar, G, G, Eigen::RowMajor>> g(grad_out.row(r).data());
    const Vg yh = c.gate_h.row(r).transpose(), yw = c.gate_w.row(r).transpose();
    Eigen::Map<Eigen::Matrix<Scalar, G, G, Eigen::RowMajor>> dx(grad_in.row(r).data());
    dx = (yh * yw.transpose()).cwiseProduct(g);

    const Eigen::Matrix<Scalar, G, G, Eigen::RowMajor> gx = g.cwiseProduct(x);
    const Vg dyh = gx * yw;
    const Vg dyw = gx.transpose() * yh;

    auto branch = [&](const Vg& dy, const Vg& y, const Vg& nrm, Scalar rstd, const Vg& z, const VecX& gain,
                      const VecX& kernel, VecX& g_gain, VecX& g_shift, VecX& g_kernel, VecX& g_bias) -> Vg {
      const Vg dpre = dy.cwiseProduct(y.cwiseProduct(Vg::Ones() - y));
      g_gain += dpre.cwiseProduct(nrm);
      g_shift += dpre;
      const Vg dn = dpre.cwiseProduct(gain);
      const Vg du = normalize_backward<Vg>(nrm, rstd, dn);
      Vg dz = Vg::Zero();
      for (int i = 0; i < G; ++i) {
        g_bias(0) += du(i);
        for (int t = -1; t <= 1; ++t) {
          const int j = i + t;
          if (j < 0 || j >= G) continue;
          g_kernel(t + 1) += du(i) * z(j);
          dz(j) += du(i) * kernel(t + 1);
        }
      }
      return dz;
    };
    const Vg dzh = branch(dyh, yh, c.norm_h.row(r).transpose(), c.rstd_h(r), c.pooled_h.row(r).transpose(),
                          p.gain_h, p.kernel_h, grad.gain_h, grad.shift_h, grad.kernel_h, grad.bias_h);
    const Vg dzw = branch(dyw, yw, c.norm_w.row(r).transpose(), c.rstd_w(r), c.pooled_w.row(r).transpose(),
                          p.gain_w, p.kernel_w, grad.gain_w, grad.shift_w, grad.kernel_w, grad.bias_w);
    dx.colwise() += dzh / G;
    dx.rowwise() += dzw.transpose() / G;
  }
  return grad_in;
}

RowMat structural_attention(const RowMat& f_gra, const StructuralParams& p, StructuralCache* cache) {
  const Eigen::Index n = f_gra.rows();
  if (n < 1) throw Error("structural attention needs at least one row");
  if (f_gra.cols() != kInputDim) throw Error("structural attention input must have 36 columns");
  const int dh = p.head_dim;
  const Scalar scale = 1 / std::sqrt(static_cast<Scalar>(dh));
  RowMat q = f_gra * p.wq.transpose();
  RowMat k = f_gra * p.wk.transpose();
  RowMat v = f_gra * p.wv.transpose();
  RowMat o(n, p.inner_dim());
  std::vector<MatX> weights;
  if (cache) weights.reserve(p.heads);
  for (int h = 0; h < p.heads; ++h) {
    MatX s = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto row = s.row(i);
      row.array() = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
    o.middleCols(h * dh, dh).noalias() = s * v.middleCols(h * dh, dh);
    if (cache) weights.push_back(std::move(s));
  }
  RowMat z = o * p.wo.transpose() + f_gra;
  VecX rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = z.row(i);
    const Scalar mean = row.mean();
    row.array() -= mean;
    rstd(i) = 1 / std::sqrt(row.squaredNorm() / kInputDim + kNormEps);
    row *= rstd(i);
  }
  RowMat out = (z.array().rowwise() * p.ln_gain.transpose().array()).rowwise() + p.ln_bias.transpose().array();
  if (cache) {
    cache->input = f_gra;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn_out = std::move(o);
    cache->weights = std::move(weights);
    cache->normed = std::move(z);
    cache->rstd = std::move(rstd);
  }
  return out;
}

RowMat structural_attention_backward(const StructuralCache& c, const StructuralParams& p, const RowMat& grad_out,
                                     StructuralParams& grad) {
  const Eigen::Index n = c.input.rows();
  const int dh = p.head_dim;
  const Scalar scale = 1 / std::sqrt(static_cast<Scalar>(dh));

  grad.ln_gain += (grad_out.array() * c.normed.array()).colwise().sum().transpose().matrix();
  grad.ln_bias += grad_out.colwise().sum().transpose();
  const RowMat dnormed = grad_out.array().rowwise() * p.ln_gain.transpose().array();
  RowMat dz(n, kInputDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const VecX xh = c.normed.row(i).transpose();
    const VecX g = dnormed.row(i).transpose();
    dz.row(i) = normalize_backward<VecX>(xh, c.rstd(i), g).transpose();
  }

  grad.wo.noalias() += dz.transpose() * c.attn_out;
  const RowMat dout = dz * p.wo;
  RowMat dq(n, p.inner_dim()), dk(n, p.inner_dim()), dv(n, p.inner_dim());
  for (int h = 0; h < p.heads; ++h) {
    const MatX& w = c.weights[h];
    const auto doh = dout.middleCols(h * dh, dh);
    MatX dw = doh * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = w.transpose() * doh;
    const VecX rowdot = (dw.array() * w.array()).rowwise().sum();
    MatX ds = (w.array() * (dw.array().colwise() - rowdot.array())).matrix() * scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  grad.wq.noalias() += dq.transpose() * c.input;
  grad.wk.noalias() += dk.transpose() * c.input;
  grad.wv.noalias() += dv.transpose() * c.input;
  RowMat din = dz;
  din.noalias() += dq * p.wq;
  din.noalias() += dk * p.wk;
  din.noalias() += dv * p.wv;
  return din;
}

RowMat color_head(const RowMat& features, const ColorHeadParams& p) {
  if (features.cols() != p.weight.cols()) throw Error("color head input width mismatch");
  RowMat logits = features * p.weight.transpose();
  logits.rowwise() += p.bias.transpose();
  return logits.unaryExpr([](Scalar x) { return sigmoid(x); });
}

RowMat color_head_backward(const RowMat& features, const RowMat& colors, const ColorHeadParams& p,
                           const RowMat& grad_colors, ColorHeadParams& grad) {
  const RowMat dlogits = grad_colors.array() * colors.array() * (1 - colors.array());
  grad.weight.noalias() += dlogits.transpose() * features;
  grad.bias += dlogits.colwise().sum().transpose();
  return dlogits * p.weight;
}

RowMat hgsa_forward(const RowMat& f_in, const HgsaParams& p, HgsaCache* cache) {
  RowMat f_gra = granular_attention(f_in, p.granular, cache ? &cache->granular : nullptr);
  RowMat f_hgsa = structural_attention(f_gra, p.structural, cache ? &cache->structural : nullptr);
  RowMat colors = color_head(f_hgsa, p.color);
  if (cache) {
    cache->features = std::move(f_hgsa);
    cache->colors = colors;
  }
  return colors;
}

RowMat hgsa_backward(const HgsaCache& cache, const HgsaParams& p, const RowMat& grad_colors, HgsaParams& grad) {
  const RowMat d_hgsa = color_head_backward(cache.features, cache.colors, p.color, grad_colors, grad.color);
  const RowMat d_gra = structural_attention_backward(cache.structural, p.structural, d_hgsa, grad.structural);
  return granular_attention_backward(cache.granular, p.granular, d_gra, grad.granular);
}

}  // namespace pepgs
