// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint layout (all integers little-endian uint32):
//
//   "PEPG" | version | config length | config JSON
//   | tensor count | per tensor: name length, name, rows, cols, rows*cols float32 (row-major)
//   | CRC-32 of every preceding byte

#pragma once

#include <string>

#include "pepgs/config.hpp"
#include "pepgs/model.hpp"

namespace pepgs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  Model model;
};

std::string encode_checkpoint(const TrainConfig& config, const Model& model);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const TrainConfig& config, const Model& model);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pepgs
