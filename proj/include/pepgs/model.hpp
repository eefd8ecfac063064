// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// The anchored neural-Gaussian model: per-view decoding of anchors into
// Gaussians, rasterization, and the matching backward pass.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "pepgs/hgsa.hpp"
#include "pepgs/image.hpp"
#include "pepgs/kan.hpp"
#include "pepgs/rasterizer.hpp"
#include "pepgs/scene.hpp"

namespace pepgs {

struct ModelConfig {
  int k = 10;
  int heads = 7;
  int kan_hidden = 16;
  int kan_grid = 5;
  int kan_order = 3;
  Scalar tau_alpha = 0.0;
  Scalar voxel_size = 0.2;
  Vec3 background = Vec3::Zero();
  bool disable_hgsa = false;
  bool disable_kan_cov = false;
  bool disable_kan_op = false;
};

/// Parameter groups share a learning rate.
enum class ParamGroup { Feature, Offset, Scale, Head };
const char* group_name(ParamGroup g);

/// Dense affine map used where an ablation swaps out a KAN or the attention head.
struct LinearHead {
  MatX weight;
  VecX bias;

  LinearHead() = default;
  LinearHead(int in, int out) : weight(MatX::Zero(out, in)), bias(VecX::Zero(out)) {}
  void init(std::mt19937_64& rng);
  RowMat forward(const RowMat& x) const;
  /// Accumulates into `grad`, returns d/dx.
  RowMat backward(const RowMat& x, const RowMat& grad_out, LinearHead& grad) const;
};

/// Either a KAN or (ablated) a linear map, applied to tanh-squashed inputs.
struct AttributeNet {
  bool use_kan = true;
  KanNetwork kan;
  LinearHead linear;

  template <class F>
  void visit(F&& f) {
    if (use_kan)
      kan.visit([&](const std::string& n, auto& m) { f(n, m); });
    else {
      f(std::string("linear.weight"), linear.weight);
      f(std::string("linear.bias"), linear.bias);
    }
  }
};

struct Model {
  ModelConfig config;
  RowMat anchor_positions;  // N x 3, fixed scene structure

  RowMat features;    // N x 32
  RowMat offsets;     // N x 3k, offset j in columns 3j..3j+2
  RowMat log_scales;  // N x 3, anchor scale l_v = exp(log_scale)
  WeightNet weight_net;
  HgsaParams hgsa;
  AttributeNet opacity;
  AttributeNet covariance;

  explicit Model(const ModelConfig& cfg = {}, int anchors = 0);

  /// Voxelizes `cloud` and initializes every parameter from `seed`.
  static Model create(const PointCloud& cloud, const ModelConfig& cfg, std::uint64_t seed);

  int num_anchors() const { return static_cast<int>(anchor_positions.rows()); }
  Anchor anchor(int i) const;

  /// Visits (name, group, dense matrix) for every learnable tensor in a fixed order.
  template <class F>
  void visit(F&& f) {
    f(std::string("anchor.feature"), ParamGroup::Feature, features);
    f(std::string("anchor.offset"), ParamGroup::Offset, offsets);
    f(std::string("anchor.log_scale"), ParamGroup::Scale, log_scales);
    weight_net.visit([&](const char* n, auto& m) { f(std::string("weight_net.") + n, ParamGroup::Head, m); });
    if (config.disable_hgsa) {
      hgsa.color.visit([&](const char* n, auto& m) { f(std::string("color_linear.") + n, ParamGroup::Head, m); });
    } else {
      hgsa.visit([&](const std::string& n, auto& m) { f("hgsa." + n, ParamGroup::Head, m); });
    }
    opacity.visit([&](const std::string& n, auto& m) { f("opacity." + n, ParamGroup::Head, m); });
    covariance.visit([&](const std::string& n, auto& m) { f("covariance." + n, ParamGroup::Head, m); });
  }

  /// A zero-valued model with identical shapes, used as a gradient buffer.
  Model zeros_like() const;
  size_t parameter_count();
};

struct RenderStats {
  int visible_anchors = 0;
  int gaussians = 0;   // decoded for visible anchors
  int retained = 0;    // passing the opacity threshold
  int splats = 0;      // surviving projection culling
  int rotation_fallbacks = 0;
};

struct ForwardCache {
  std::vector<int> anchors;  // visible anchor ids
  std::vector<BankBlend> blends;
  RowMat f_in;
  RowMat squashed;  // tanh(f_in)
  HgsaCache hgsa;
  RowMat colors;
  KanCache op_kan, cov_kan;
  RowMat op_raw, cov_raw;
  OpacityOutput opacity;
  RowMat base_scales;
  CovarianceOutput cov;
  std::vector<int> retained;  // gaussian ids (anchor_row * k + j)
  std::vector<NeuralGaussian> gaussians;  // parallel to retained
  std::vector<SplattedGaussian> splats;   // source = index into retained
};

struct RenderOutput {
  ImageBuffer image;
  RowMat scales;  // retained Gaussian scales, for the volume term
  RenderStats stats;
};

RenderOutput render_view(const Model& model, const Camera& camera, ForwardCache* cache = nullptr,
                         const RasterOptions& raster = {});

/// Accumulates parameter gradients into `grad` (shaped like `model`).
void backward_view(const Model& model, const Camera& camera, const ForwardCache& cache,
                   const ImageBuffer& grad_image, const RowMat& grad_scales, Model& grad,
                   const RasterOptions& raster = {});

/// Decoded Gaussians (retained only) for a view, for inspection and tests.
std::vector<NeuralGaussian> decode_gaussians(const Model& model, const Camera& camera);

}  // namespace pepgs
