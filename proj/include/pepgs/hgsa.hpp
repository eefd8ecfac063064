// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// Hierarchical granular-structural attention color head.
//
// Each input row (distance, direction, blended feature; 36 values) is viewed as
// a 6x6 grid. The granular stage pools the grid along rows and columns, runs
// each pooled vector through a width-3 convolution, a per-vector normalization,
// and a sigmoid, then scales every grid entry by its row gate and column gate.
// The structural stage is multi-head self-attention across the anchor rows
// followed by a residual connection and LayerNorm. A linear map with sigmoid
// turns the result into k RGB colors per anchor.

#pragma once

#include <random>
#include <vector>

#include "pepgs/types.hpp"

namespace pepgs {

inline constexpr int kGridSide = 6;
inline constexpr Scalar kNormEps = 1e-5;

struct GranularParams {
  VecX kernel_h = VecX::Zero(3), kernel_w = VecX::Zero(3);
  VecX bias_h = VecX::Zero(1), bias_w = VecX::Zero(1);
  VecX gain_h = VecX::Ones(kGridSide), shift_h = VecX::Zero(kGridSide);
  VecX gain_w = VecX::Ones(kGridSide), shift_w = VecX::Zero(kGridSide);

  template <class F>
  void visit(F&& f) {
    f("kernel_h", kernel_h);
    f("bias_h", bias_h);
    f("kernel_w", kernel_w);
    f("bias_w", bias_w);
    f("gain_h", gain_h);
    f("shift_h", shift_h);
    f("gain_w", gain_w);
    f("shift_w", shift_w);
  }
  void init(std::mt19937_64& rng);
  void set_zero();
};

struct StructuralParams {
  int heads = 7;
  int head_dim = 5;
  MatX wq, wk, wv;  // (heads*head_dim) x 36
  MatX wo;          // 36 x (heads*head_dim)
  VecX ln_gain = VecX::Ones(kInputDim), ln_bias = VecX::Zero(kInputDim);

  explicit StructuralParams(int heads = 7);
  int inner_dim() const { return heads * head_dim; }

  template <class F>
  void visit(F&& f) {
    f("wq", wq);
    f("wk", wk);
    f("wv", wv);
    f("wo", wo);
    f("ln_gain", ln_gain);
    f("ln_bias", ln_bias);
  }
  void init(std::mt19937_64& rng);
  void set_zero();
};

struct ColorHeadParams {
  MatX weight;  // 3k x 36
  VecX bias;

  explicit ColorHeadParams(int k = 10) : weight(MatX::Zero(3 * k, kInputDim)), bias(VecX::Zero(3 * k)) {}

  template <class F>
  void visit(F&& f) {
    f("weight", weight);
    f("bias", bias);
  }
  void init(std::mt19937_64& rng);
  void set_zero();
};

struct GranularCache {
  RowMat input;
  RowMat pooled_h, pooled_w;  // N x 6
  RowMat norm_h, norm_w;      // normalized conv outputs
  VecX rstd_h, rstd_w;
  RowMat gate_h, gate_w;
};

struct StructuralCache {
  RowMat input, q, k, v, attn_out;
  std::vector<MatX> weights;  // per head, N x N softmax rows
  RowMat normed;              // pre-gain LayerNorm output
  VecX rstd;
};

RowMat granular_attention(const RowMat& f_in, const GranularParams& p, GranularCache* cache = nullptr);
RowMat granular_attention_backward(const GranularCache& cache, const GranularParams& p, const RowMat& grad_out,
                                   GranularParams& grad);

RowMat structural_attention(const RowMat& f_gra, const StructuralParams& p, StructuralCache* cache = nullptr);
RowMat structural_attention_backward(const StructuralCache& cache, const StructuralParams& p,
                                     const RowMat& grad_out, StructuralParams& grad);

/// N x 3k colors in (0,1); columns 3j..3j+2 are the RGB of Gaussian j.
RowMat color_head(const RowMat& features, const ColorHeadParams& p);
/// `colors` is the forward output.
RowMat color_head_backward(const RowMat& features, const RowMat& colors, const ColorHeadParams& p,
                           const RowMat& grad_colors, ColorHeadParams& grad);

struct HgsaParams {
  GranularParams granular;
  StructuralParams structural;
  ColorHeadParams color;

  HgsaParams(int k, int heads) : structural(heads), color(k) {}
  template <class F>
  void visit(F&& f) {
    granular.visit([&](const char* n, auto& m) { f(std::string("granular.") + n, m); });
    structural.visit([&](const char* n, auto& m) { f(std::string("structural.") + n, m); });
    color.visit([&](const char* n, auto& m) { f(std::string("color.") + n, m); });
  }
  void init(std::mt19937_64& rng) {
    granular.init(rng);
    structural.init(rng);
    color.init(rng);
  }
};

struct HgsaCache {
  GranularCache granular;
  StructuralCache structural;
  RowMat features;
  RowMat colors;
};

RowMat hgsa_forward(const RowMat& f_in, const HgsaParams& p, HgsaCache* cache = nullptr);
RowMat hgsa_backward(const HgsaCache& cache, const HgsaParams& p, const RowMat& grad_colors, HgsaParams& grad);

}  // namespace pepgs
