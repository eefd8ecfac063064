// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/model.hpp"

#include <cmath>

#include "pepgs/random.hpp"

namespace pepgs {

namespace {

// Keeps the projected covariance invertible when a decoded scale collapses.
constexpr Scalar kVarianceFloor = 1e-8;

AttributeNet make_attribute_net(bool use_kan, int out, const ModelConfig& cfg) {
  AttributeNet net;
  net.use_kan = use_kan;
  if (use_kan)
    net.kan = KanNetwork({kInputDim, cfg.kan_hidden, out}, cfg.kan_grid, cfg.kan_order);
  else
    net.linear = LinearHead(kInputDim, out);
  return net;
}

RowMat attribute_forward(const AttributeNet& net, const RowMat& x, KanCache* cache) {
  return net.use_kan ? kan_forward(net.kan, x, cache) : net.linear.forward(x);
}

RowMat attribute_backward(const AttributeNet& net, const RowMat& x, const KanCache& cache, const RowMat& grad_out,
                          AttributeNet& grad) {
  return net.use_kan ? kan_backward(net.kan, cache, grad_out, grad.kan) : net.linear.backward(x, grad_out, grad.linear);
}

// Anchors whose center is in front of the camera and projects within a
// generous margin around the frame; their Gaussians may still reach the image.
bool anchor_visible(const Vec3& p, const Camera& cam) {
  const Vec3 c = cam.rotation * p + cam.translation;
  if (c.z() <= kNearPlane) return false;
  const Scalar u = cam.fx * c.x() / c.z() + cam.cx;
  const Scalar v = cam.fy * c.y() / c.z() + cam.cy;
  return u >= -cam.width && u <= 2.0 * cam.width && v >= -cam.height && v <= 2.0 * cam.height;
}

}  // namespace

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Feature: return "feature";
    case ParamGroup::Offset: return "offset";
    case ParamGroup::Scale: return "scale";
    case ParamGroup::Head: return "head";
  }
  return "?";
}

void LinearHead::init(std::mt19937_64& rng) {
  const Scalar a = 1 / std::sqrt(static_cast<Scalar>(weight.cols()));
  fill_uniform(weight, rng, -a, a);
  fill_uniform(bias, rng, -a, a);
}

RowMat LinearHead::forward(const RowMat& x) const {
  RowMat y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

RowMat LinearHead::backward(const RowMat& x, const RowMat& grad_out, LinearHead& grad) const {
  grad.weight += grad_out.transpose() * x;
  grad.bias += grad_out.colwise().sum().transpose();
  return grad_out * weight;
}

Model::Model(const ModelConfig& cfg, int anchors)
    : config(cfg),
      anchor_positions(RowMat::Zero(anchors, 3)),
      features(RowMat::Zero(anchors, kFeatureDim)),
      offsets(RowMat::Zero(anchors, 3 * cfg.k)),
      log_scales(RowMat::Zero(anchors, 3)),
      hgsa(cfg.k, cfg.heads),
      opacity(make_attribute_net(!cfg.disable_kan_op, cfg.k, cfg)),
      covariance(make_attribute_net(!cfg.disable_kan_cov, 7 * cfg.k, cfg)) {
  if (cfg.k <= 0) throw Error("k must be positive");
  if (cfg.heads <= 0 || kInputDim / cfg.heads <= 0) throw Error("invalid attention head count");
  if (cfg.kan_hidden <= 0) throw Error("kan hidden width must be positive");
}

Model Model::create(const PointCloud& cloud, const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto anchors = voxelize_anchors(cloud, cfg.voxel_size, cfg.k, rng);
  Model m(cfg, static_cast<int>(anchors.size()));
  for (size_t i = 0; i < anchors.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m.anchor_positions.row(r) = anchors[i].position.transpose();
    m.features.row(r) = anchors[i].feature.transpose();
    m.offsets.row(r) = Eigen::Map<const RowMat>(anchors[i].offsets.data(), 1, 3 * cfg.k);
    m.log_scales.row(r) = anchors[i].scale.array().log().transpose();
  }
  m.weight_net.init(rng);
  m.hgsa.init(rng);
  if (m.opacity.use_kan) m.opacity.kan.init(rng); else m.opacity.linear.init(rng);
  if (m.covariance.use_kan) m.covariance.kan.init(rng); else m.covariance.linear.init(rng);
  // Keep everything on the float32 grid so checkpoints reproduce it exactly.
  const auto to_float = [](auto& x) { x = x.template cast<float>().template cast<Scalar>(); };
  to_float(m.anchor_positions);
  m.visit([&](const std::string&, ParamGroup, auto& x) { to_float(x); });
  return m;
}

Anchor Model::anchor(int i) const {
  Anchor a;
  a.position = anchor_positions.row(i).transpose();
  a.feature = features.row(i).transpose();
  a.scale = log_scales.row(i).array().exp().transpose();
  a.offsets = Eigen::Map<const RowMat>(offsets.row(i).data(), config.k, 3);
  return a;
}

Model Model::zeros_like() const {
  Model z = *this;
  z.visit([](const std::string&, ParamGroup, auto& m) { m.setZero(); });
  return z;
}

size_t Model::parameter_count() {
  size_t n = 0;
  visit([&](const std::string&, ParamGroup, auto& m) { n += static_cast<size_t>(m.size()); });
  return n;
}

RenderOutput render_view(const Model& model, const Camera& camera, ForwardCache* cache_out,
                         const RasterOptions& raster) {
  camera.validate();
  const int k = model.config.k;
  ForwardCache local;
  ForwardCache& c = cache_out ? *cache_out : local;
  c = ForwardCache{};

  for (int i = 0; i < model.num_anchors(); ++i)
    if (anchor_visible(model.anchor_positions.row(i).transpose(), camera)) c.anchors.push_back(i);
  const auto n = static_cast<Eigen::Index>(c.anchors.size());

  RenderOutput out;
  out.stats.visible_anchors = static_cast<int>(n);
  out.stats.gaussians = static_cast<int>(n) * k;
  if (n == 0) {
    out.image = rasterize({}, camera.width, camera.height, model.config.background, raster);
    out.scales = RowMat::Zero(0, 3);
    return out;
  }

  c.f_in.resize(n, kInputDim);
  c.base_scales.resize(n, 3);
  c.blends.reserve(static_cast<size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    const int a = c.anchors[static_cast<size_t>(r)];
    const ViewContext ctx = view_context(model.anchor_positions.row(a).transpose(), camera);
    c.blends.push_back(blend_feature_bank(model.features.row(a).transpose(), ctx, model.weight_net));
    c.f_in(r, 0) = ctx.distance;
    c.f_in.row(r).segment<3>(1) = ctx.direction.transpose();
    c.f_in.row(r).tail(kFeatureDim) = c.blends.back().blended.transpose();
    c.base_scales.row(r) = model.log_scales.row(a).array().exp();
  }

  c.colors = model.config.disable_hgsa ? color_head(c.f_in, model.hgsa.color)
                                       : hgsa_forward(c.f_in, model.hgsa, &c.hgsa);
  c.squashed = c.f_in.array().tanh();
  c.op_raw = attribute_forward(model.opacity, c.squashed, &c.op_kan);
  c.opacity = decode_opacity(c.op_raw, model.config.tau_alpha);
  c.cov_raw = attribute_forward(model.covariance, c.squashed, &c.cov_kan);
  c.cov = decode_covariance(c.cov_raw, c.base_scales);
  out.stats.rotation_fallbacks = c.cov.fallback_count;

  for (Eigen::Index r = 0; r < n; ++r) {
    const int a = c.anchors[static_cast<size_t>(r)];
    const Vec3 pos = model.anchor_positions.row(a).transpose();
    for (int j = 0; j < k; ++j) {
      if (!c.opacity.keep(r, j)) continue;
      const Eigen::Index g = r * k + j;
      NeuralGaussian ng;
      const Vec3 off = model.offsets.row(a).segment<3>(3 * j).transpose();
      ng.mean = pos + off.cwiseProduct(c.base_scales.row(r).transpose());
      ng.opacity = c.opacity.alpha(r, j);
      ng.color = c.colors.row(r).segment<3>(3 * j).transpose();
      ng.scale = c.cov.scales.row(g).transpose();
      ng.rotation = c.cov.rotations.row(g).transpose();
      ng.covariance = compose_covariance<Scalar>(ng.scale, ng.rotation, kVarianceFloor);
      c.retained.push_back(static_cast<int>(g));
      c.gaussians.push_back(ng);
    }
  }
  out.stats.retained = static_cast<int>(c.retained.size());
  out.scales.resize(static_cast<Eigen::Index>(c.retained.size()), 3);
  for (size_t i = 0; i < c.gaussians.size(); ++i) {
    out.scales.row(static_cast<Eigen::Index>(i)) = c.gaussians[i].scale.transpose();
    if (auto s = project(c.gaussians[i], camera)) {
      s->source = static_cast<int>(i);
      c.splats.push_back(*s);
    }
  }
  out.stats.splats = static_cast<int>(c.splats.size());
  out.image = rasterize(c.splats, camera.width, camera.height, model.config.background, raster);
  return out;
}

void backward_view(const Model& model, const Camera& camera, const ForwardCache& c, const ImageBuffer& grad_image,
                   const RowMat& grad_scales, Model& grad, const RasterOptions& raster) {
  const int k = model.config.k;
  const auto n = static_cast<Eigen::Index>(c.anchors.size());
  if (n == 0) return;
  if (grad_scales.rows() != static_cast<Eigen::Index>(c.retained.size()))
    throw Error("scale gradient does not match the retained Gaussians");

  RowMat g_colors = RowMat::Zero(n, 3 * k);
  RowMat g_alpha = RowMat::Zero(n, k);
  RowMat g_dec_scales = RowMat::Zero(n * k, 3);
  RowMat g_dec_rot = RowMat::Zero(n * k, 4);
  RowMat g_base = RowMat::Zero(n, 3);

  for (size_t i = 0; i < c.retained.size(); ++i)
    g_dec_scales.row(c.retained[i]) += grad_scales.row(static_cast<Eigen::Index>(i));

  const auto splat_grads =
      rasterize_backward(c.splats, camera.width, camera.height, model.config.background, grad_image, raster);
  for (size_t si = 0; si < c.splats.size(); ++si) {
    const auto gi = static_cast<size_t>(c.splats[si].source);
    const NeuralGaussian& ng = c.gaussians[gi];
    const int g = c.retained[gi];
    const Eigen::Index r = g / k;
    const int j = g % k;
    const int a = c.anchors[static_cast<size_t>(r)];
    const SplatGrad& sg = splat_grads[si];
    const ProjectGrad pg = project_backward(ng, camera, sg);

    g_colors.row(r).segment<3>(3 * j) += sg.color.transpose();
    g_alpha(r, j) += sg.opacity;

    const Vec3 base = c.base_scales.row(r).transpose();
    const Vec3 off = model.offsets.row(a).segment<3>(3 * j).transpose();
    grad.offsets.row(a).segment<3>(3 * j) += pg.mean.cwiseProduct(base).transpose();
    g_base.row(r) += pg.mean.cwiseProduct(off).transpose();

    const CovarianceGrad cg = compose_covariance_backward(ng.scale, ng.rotation, pg.cov);
    g_dec_scales.row(g) += cg.scale.transpose();
    g_dec_rot.row(g) += cg.rotation.transpose();
  }

  // Opacity: alpha = tanh(raw).
  const RowMat g_op_raw = g_alpha.array() * (1 - c.opacity.alpha.array().square());
  const RowMat g_cov_raw = decode_covariance_backward(c.cov_raw, c.base_scales, c.cov, g_dec_scales, g_dec_rot, g_base);

  RowMat g_squashed = attribute_backward(model.opacity, c.squashed, c.op_kan, g_op_raw, grad.opacity);
  g_squashed += attribute_backward(model.covariance, c.squashed, c.cov_kan, g_cov_raw, grad.covariance);
  RowMat g_fin = g_squashed.array() * (1 - c.squashed.array().square());

  if (model.config.disable_hgsa)
    g_fin += color_head_backward(c.f_in, c.colors, model.hgsa.color, g_colors, grad.hgsa.color);
  else
    g_fin += hgsa_backward(c.hgsa, model.hgsa, g_colors, grad.hgsa);

  for (Eigen::Index r = 0; r < n; ++r) {
    const int a = c.anchors[static_cast<size_t>(r)];
    // l_v = exp(log_scale)
    grad.log_scales.row(a) += g_base.row(r).cwiseProduct(c.base_scales.row(r));
    const VecX gb = g_fin.row(r).tail(kFeatureDim).transpose();
    grad.features.row(a) += blend_feature_bank_backward(model.features.row(a).transpose(), c.blends[static_cast<size_t>(r)],
                                                        model.weight_net, gb, grad.weight_net)
                                .transpose();
  }
}

std::vector<NeuralGaussian> decode_gaussians(const Model& model, const Camera& camera) {
  ForwardCache c;
  render_view(model, camera, &c);
  return c.gaussians;
}

}  // namespace pepgs
