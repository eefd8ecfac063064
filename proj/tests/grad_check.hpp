// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// Central-difference check of the full model gradient, shared by the unit
// tests and the acceptance binary.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pepgs/config.hpp"
#include "pepgs/losses.hpp"
#include "pepgs/model.hpp"
#include "pepgs/optimizer.hpp"
#include "pepgs/random.hpp"
#include "pepgs/training.hpp"

namespace pepgs::testing {

struct GradCheckReport {
  size_t checked = 0;
  size_t failed = 0;
  double worst_rel = 0;
  std::string worst_name;
  double vector_rel = 0;  // |a - n| / max(|a|, |n|) over the whole vector
  size_t nonzero = 0;
};

inline Model analytic_gradient(const Model& model, const View& view, const TrainConfig& cfg) {
  ForwardCache cache;
  const RenderOutput out = render_view(model, view.camera, &cache);
  ImageBuffer gi;
  RowMat gs;
  total_loss(out.image, view.image, out.scales, cfg.effective_loss(), cfg.nlpd, &gi, &gs);
  Model grad = model.zeros_like();
  backward_view(model, view.camera, cache, gi, gs, grad);
  return grad;
}

/// Entry passes when |a - n| <= rel_tol * max(|a|, |n|) or |a - n| <= abs_floor
/// (the floating-point noise level of the difference quotient).
inline GradCheckReport check_gradients(Model model, const View& view, const TrainConfig& cfg, double h = 1e-6,
                                       double rel_tol = 1e-3, double abs_floor = 1e-9) {
  Model grad = analytic_gradient(model, view, cfg);
  std::vector<double> analytic;
  std::vector<std::string> names;
  grad.visit([&](const std::string& name, ParamGroup, auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      analytic.push_back(m.data()[i]);
      names.push_back(name + "[" + std::to_string(i) + "]");
    }
  });
  GradCheckReport rep;
  size_t idx = 0;
  double diff2 = 0, a2 = 0, n2 = 0;
  std::vector<std::pair<Scalar*, Eigen::Index>> slots;
  model.visit([&](const std::string&, ParamGroup, auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) slots.emplace_back(m.data() + i, i);
  });
  for (auto& [ptr, _] : slots) {
    const Scalar orig = *ptr;
    *ptr = orig + h;
    const double lp = view_loss(model, view, cfg).total;
    *ptr = orig - h;
    const double lm = view_loss(model, view, cfg).total;
    *ptr = orig;
    const double num = (lp - lm) / (2 * h);
    const double a = analytic[idx];
    const double d = std::abs(a - num);
    const double scale = std::max(std::abs(a), std::abs(num));
    diff2 += d * d;
    a2 += a * a;
    n2 += num * num;
    if (a != 0) ++rep.nonzero;
    ++rep.checked;
    if (!(d <= rel_tol * scale || d <= abs_floor)) {
      ++rep.failed;
      const double rel = scale > 0 ? d / scale : d;
      if (rel > rep.worst_rel) {
        rep.worst_rel = rel;
        rep.worst_name = names[idx] + " analytic=" + std::to_string(a) + " numeric=" + std::to_string(num);
      }
    }
    ++idx;
  }
  rep.vector_rel = std::sqrt(diff2) / std::max(std::sqrt(std::max(a2, n2)), 1e-300);
  return rep;
}

/// Two anchors, k = 4, one 8x8 view against a random target image.
struct MicroScene {
  Model model;
  View view;
  TrainConfig config;
};

inline MicroScene micro_scene(std::uint64_t seed = 3) {
  MicroScene s;
  s.config.model.k = 4;
  s.config.model.voxel_size = 0.5;
  s.config.seed = seed;
  PointCloud cloud;
  cloud.points = {Vec3(0, 0, 0), Vec3(0.5, 0.0, 0.5)};
  s.model = Model::create(cloud, s.config.model, seed);
  s.view.camera = Camera::look_at(Vec3(0.4, 0.6, -3.0), Vec3(0.25, 0, 0.25), Vec3::UnitY(), 8, 8, 14.0);
  std::mt19937_64 rng(seed + 100);
  s.view.image = ImageBuffer(8, 8);
  for (auto& ch : s.view.image.channels) fill_uniform(ch, rng, 0.0, 1.0);
  return s;
}

}  // namespace pepgs::testing
