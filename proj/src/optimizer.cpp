// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/optimizer.hpp"

#include <cmath>

namespace pepgs {

Scalar AdamConfig::lr(ParamGroup g) const {
  switch (g) {
    case ParamGroup::Feature: return lr_feature;
    case ParamGroup::Offset: return lr_offset;
    case ParamGroup::Scale: return lr_scale;
    case ParamGroup::Head: return lr_head;
  }
  return 0;
}

void round_to_float(Model& model) {
  model.visit([](const std::string&, ParamGroup, auto& m) { m = m.template cast<float>().template cast<Scalar>(); });
}

void check_finite(Model& grad, const char* what) {
  grad.visit([&](const std::string& name, ParamGroup, auto& m) {
    if (!m.allFinite()) throw Error(std::string("non-finite ") + what + " in " + name);
  });
}

Adam::Adam(Model& model, const AdamConfig& config) : config_(config) {
  model.visit([&](const std::string&, ParamGroup, auto& p) {
    m_.push_back(MatX::Zero(p.rows(), p.cols()));
    v_.push_back(MatX::Zero(p.rows(), p.cols()));
  });
}

void Adam::step(Model& model, Model& grad) {
  ++t_;
  std::vector<MatX> grads;
  grad.visit([&](const std::string&, ParamGroup, auto& g) { grads.push_back(g); });
  size_t i = 0;
  model.visit([&](const std::string& name, ParamGroup group, auto& p) {
    if (i >= grads.size() || grads[i].rows() != p.rows() || grads[i].cols() != p.cols())
      throw Error("gradient shape mismatch for " + name);
    adam_update(p, grads[i], m_[i], v_[i], config_.lr(group), t_, config_);
    ++i;
  });
  grad.visit([](const std::string&, ParamGroup, auto& g) { g.setZero(); });
  round_to_float(model);
}

}  // namespace pepgs
