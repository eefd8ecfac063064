// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// Training configuration and its `key = value` text form.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pepgs/losses.hpp"
#include "pepgs/model.hpp"
#include "pepgs/optimizer.hpp"

namespace pepgs {

struct TrainConfig {
  ModelConfig model;
  AdamConfig adam;
  LossWeights loss;
  NlpdParams nlpd;
  int iterations = 30000;
  std::uint64_t seed = 0;
  int snapshot_every = 0;  // 0 disables periodic snapshots
  int threads = 1;
  bool disable_nlpd = false;

  void validate() const;
  /// Weights actually used by the objective (lambda_nlpd forced to 0 when disabled).
  LossWeights effective_loss() const;
};

/// Every recognized key, in the order they are documented.
const std::vector<std::string>& config_keys();

/// Sets one key from its text value. Unknown keys and malformed values throw
/// Error; the unknown-key message lists every valid key.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Applies a `key = value` document (`#` starts a comment) on top of `cfg`.
void apply_config_text(TrainConfig& cfg, const std::string& text);
void apply_config_file(TrainConfig& cfg, const std::string& path);

/// Flat object keyed by config_keys(); nlohmann objects serialize with sorted keys.
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);

}  // namespace pepgs
