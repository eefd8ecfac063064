// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/kan.hpp"

#include <algorithm>
#include <cmath>

#include "pepgs/random.hpp"

namespace pepgs {

namespace {

Scalar sigmoid(Scalar x) { return 1 / (1 + std::exp(-x)); }
Scalar silu(Scalar x) { return x * sigmoid(x); }
Scalar silu_grad(Scalar x) {
  const Scalar s = sigmoid(x);
  return s * (1 + x * (1 - s));
}

}  // namespace

VecX make_knots(int intervals, int order, Scalar lo, Scalar hi) {
  if (intervals < 1 || order < 0 || !(hi > lo)) throw Error("invalid spline grid");
  const Scalar h = (hi - lo) / intervals;
  VecX t(intervals + 2 * order + 1);
  for (int j = 0; j < t.size(); ++j) t(j) = lo + (j - order) * h;
  return t;
}

SplineEval spline_eval(Scalar x, const VecX& t, int p) {
  const int m = static_cast<int>(t.size()) - 1;
  const Scalar lo = t(p), hi = t(m - p);
  const bool clamped = !(x > lo && x < hi);
  if (x < lo || std::isnan(x)) x = lo;
  if (x > hi) x = hi;

  // Span s with t[s] <= x < t[s+1], restricted to the valid range [p, m-p-1].
  int s = static_cast<int>(std::upper_bound(t.data() + p, t.data() + (m - p), x) - t.data()) - 1;
  s = std::clamp(s, p, m - p - 1);

  if (p > kMaxSplineOrder) throw Error("spline order too large");
  SplineVec n = SplineVec::Zero(p + 1), prev = SplineVec::Zero(std::max(p, 1));
  SplineVec left(p + 1), right(p + 1);
  n(0) = 1;
  for (int j = 1; j <= p; ++j) {
    if (j == p) prev.head(p) = n.head(p);
    left(j) = x - t(s + 1 - j);
    right(j) = t(s + j) - x;
    Scalar saved = 0;
    for (int r = 0; r < j; ++r) {
      const Scalar tmp = n(r) / (right(r + 1) + left(j - r));
      n(r) = saved + right(r + 1) * tmp;
      saved = left(j - r) * tmp;
    }
    n(j) = saved;
  }

  SplineEval out;
  out.first = s - p;
  out.values = n;
  out.derivs = SplineVec::Zero(p + 1);
  if (p >= 1 && !clamped) {
    // prev(r) = N_{s-p+1+r, p-1}, r = 0..p-1
    for (int r = 0; r <= p; ++r) {
      const int i = s - p + r;
      Scalar d = 0;
      if (r >= 1) d += p / (t(i + p) - t(i)) * prev(r - 1);
      if (r <= p - 1) d -= p / (t(i + p + 1) - t(i + 1)) * prev(r);
      out.derivs(r) = d;
    }
  }
  return out;
}

VecX spline_basis(Scalar x, const VecX& knots, int order) {
  if (order < 0) throw Error("spline order must be nonnegative");
  const SplineEval e = spline_eval(x, knots, order);
  VecX b = VecX::Zero(knots.size() - order - 1);
  b.segment(e.first, order + 1) = e.values;
  return b;
}

KanLayer::KanLayer(int n_in_, int n_out_, int intervals_, int order_)
    : n_in(n_in_), n_out(n_out_), intervals(intervals_), order(order_) {
  if (n_in <= 0 || n_out <= 0) throw Error("KAN layer dimensions must be positive");
  knots = make_knots(intervals, order);
  coef = RowMat::Zero(static_cast<Eigen::Index>(n_out) * n_in, num_basis());
  base_weight = MatX::Zero(n_out, n_in);
  spline_weight = MatX::Zero(n_out, n_in);
}

void KanLayer::init(std::mt19937_64& rng) {
  for (Eigen::Index i = 0; i < coef.size(); ++i) coef.data()[i] = normal(rng, 0, 0.1) * 0.1;
  const Scalar a = 1 / std::sqrt(static_cast<Scalar>(n_in));
  fill_uniform(base_weight, rng, -a, a);
  spline_weight.setOnes();
}

void KanLayer::set_zero() {
  coef.setZero();
  base_weight.setZero();
  spline_weight.setZero();
}

RowMat kan_layer_forward(const KanLayer& layer, const RowMat& z, KanLayerCache* cache) {
  if (z.cols() != layer.n_in) throw Error("KAN layer input width mismatch");
  const Eigen::Index n = z.rows();
  const int p_order = layer.order;
  RowMat out = RowMat::Zero(n, layer.n_out);
  if (cache) {
    cache->input = z;
    cache->basis.clear();
    cache->basis.reserve(static_cast<size_t>(n) * layer.n_in);
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int p = 0; p < layer.n_in; ++p) {
      const Scalar x = z(r, p);
      SplineEval e = spline_eval(x, layer.knots, p_order);
      const Scalar base = silu(x);
      for (int q = 0; q < layer.n_out; ++q) {
        const auto c = layer.coef.row(static_cast<Eigen::Index>(q) * layer.n_in + p).segment(e.first, p_order + 1);
        const Scalar spline = c.dot(e.values.transpose());
        out(r, q) += layer.base_weight(q, p) * base + layer.spline_weight(q, p) * spline;
      }
      if (cache) cache->basis.push_back(std::move(e));
    }
  }
  return out;
}

VecX kan_layer_forward(const KanLayer& layer, const VecX& z) {
  RowMat row = z.transpose();
  return kan_layer_forward(layer, row).row(0).transpose();
}

RowMat kan_layer_backward(const KanLayer& layer, const KanLayerCache& cache, const RowMat& grad_out,
                          KanLayer& grad) {
  const Eigen::Index n = cache.input.rows();
  const int p_order = layer.order;
  RowMat grad_in = RowMat::Zero(n, layer.n_in);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int p = 0; p < layer.n_in; ++p) {
      const Scalar x = cache.input(r, p);
      const SplineEval& e = cache.basis[static_cast<size_t>(r) * layer.n_in + p];
      const Scalar base = silu(x), dbase = silu_grad(x);
      Scalar gx = 0;
      for (int q = 0; q < layer.n_out; ++q) {
        const Scalar g = grad_out(r, q);
        if (g == 0) continue;
        const Eigen::Index row = static_cast<Eigen::Index>(q) * layer.n_in + p;
        const auto c = layer.coef.row(row).segment(e.first, p_order + 1);
        const Scalar spline = c.dot(e.values.transpose());
        const Scalar ws = layer.spline_weight(q, p);
        grad.base_weight(q, p) += g * base;
        grad.spline_weight(q, p) += g * spline;
        grad.coef.row(row).segment(e.first, p_order + 1) += (g * ws) * e.values.transpose();
        gx += g * (layer.base_weight(q, p) * dbase + ws * c.dot(e.derivs.transpose()));
      }
      grad_in(r, p) = gx;
    }
  }
  return grad_in;
}

KanNetwork::KanNetwork(const std::vector<int>& widths, int intervals, int order) {
  if (widths.size() < 2) throw Error("KAN network needs at least two widths");
  for (size_t i = 0; i + 1 < widths.size(); ++i) layers.emplace_back(widths[i], widths[i + 1], intervals, order);
}

void KanNetwork::validate() const {
  if (layers.empty()) throw Error("empty KAN network");
  for (size_t i = 0; i + 1 < layers.size(); ++i)
    if (layers[i].n_out != layers[i + 1].n_in) throw Error("KAN layer widths are not shape-consistent");
}

RowMat kan_forward(const KanNetwork& net, const RowMat& z, KanCache* cache) {
  net.validate();
  if (cache) cache->layers.assign(net.layers.size(), {});
  RowMat cur = z;
  for (size_t i = 0; i < net.layers.size(); ++i)
    cur = kan_layer_forward(net.layers[i], cur, cache ? &cache->layers[i] : nullptr);
  return cur;
}

VecX kan_forward(const KanNetwork& net, const VecX& z) {
  RowMat row = z.transpose();
  return kan_forward(net, row).row(0).transpose();
}

RowMat kan_backward(const KanNetwork& net, const KanCache& cache, const RowMat& grad_out, KanNetwork& grad) {
  RowMat g = grad_out;
  for (size_t i = net.layers.size(); i-- > 0;)
    g = kan_layer_backward(net.layers[i], cache.layers[i], g, grad.layers[i]);
  return g;
}

OpacityOutput decode_opacity(const RowMat& raw, Scalar tau) {
  OpacityOutput out;
  out.alpha = raw.array().tanh();
  out.keep = (out.alpha.array() >= tau);
  return out;
}

OpacityOutput opacity_head_forward(const OpacityHead& head, const RowMat& f_in) {
  if (f_in.cols() != kInputDim) throw Error("opacity head expects 36 input columns");
  return decode_opacity(kan_forward(head.net, RowMat(f_in.array().tanh())), head.tau);
}

CovarianceOutput decode_covariance(const RowMat& raw, const RowMat& base_scales) {
  if (raw.cols() % 7 != 0) throw Error("covariance head output must be a multiple of 7 wide");
  if (base_scales.rows() != raw.rows() || base_scales.cols() != 3) throw Error("base scale shape mismatch");
  const Eigen::Index n = raw.rows(), k = raw.cols() / 7;
  CovarianceOutput out;
  out.scales.resize(n * k, 3);
  out.rotations.resize(n * k, 4);
  out.raw_rotations.resize(n * k, 4);
  out.fallback.assign(static_cast<size_t>(n * k), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index g = i * k + j;
      for (int a = 0; a < 3; ++a) out.scales(g, a) = base_scales(i, a) * sigmoid(raw(i, 7 * j + a));
      const Vec4 q = raw.row(i).segment<4>(7 * j + 3).transpose();
      out.raw_rotations.row(g) = q.transpose();
      const Scalar norm = q.norm();
      if (norm < 1e-9) {
        out.rotations.row(g) << 1, 0, 0, 0;
        out.fallback[static_cast<size_t>(g)] = true;
        ++out.fallback_count;
      } else {
        out.rotations.row(g) = (q / norm).transpose();
      }
    }
  }
  return out;
}

CovarianceOutput covariance_head_forward(const CovarianceHead& head, const RowMat& f_in, const RowMat& base_scales) {
  if (f_in.cols() != kInputDim) throw Error("covariance head expects 36 input columns");
  return decode_covariance(kan_forward(head.net, RowMat(f_in.array().tanh())), base_scales);
}

RowMat decode_covariance_backward(const RowMat& raw, const RowMat& base_scales, const CovarianceOutput& out,
                                  const RowMat& grad_scales, const RowMat& grad_rotations, RowMat& grad_base) {
  const Eigen::Index n = raw.rows(), k = raw.cols() / 7;
  RowMat grad_raw = RowMat::Zero(n, raw.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index g = i * k + j;
      for (int a = 0; a < 3; ++a) {
        const Scalar sg = sigmoid(raw(i, 7 * j + a));
        grad_raw(i, 7 * j + a) = grad_scales(g, a) * base_scales(i, a) * sg * (1 - sg);
        grad_base(i, a) += grad_scales(g, a) * sg;
      }
      if (out.fallback[static_cast<size_t>(g)]) continue;
      const Vec4 q = out.raw_rotations.row(g).transpose();
      const Scalar norm = q.norm();
      const Vec4 qn = q / norm;
      const Vec4 gq = grad_rotations.row(g).transpose();
      grad_raw.row(i).segment<4>(7 * j + 3) = ((gq - qn * qn.dot(gq)) / norm).transpose();
    }
  }
  return grad_raw;
}

}  // namespace pepgs
