// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic scenes of colored Gaussian blobs seen from a ring of cameras.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pepgs/training.hpp"

namespace pepgs {

struct SynthSpec {
  std::vector<std::string> shapes = {"sphere"};  // "sphere" or "ellipsoid"
  int views = 8;
  int width = 32;
  int height = 32;
  std::uint64_t seed = 7;
  int points_per_blob = 60;
  Scalar ring_radius = 4.0;
  Scalar focal_ratio = 1.4;  // focal length in units of image width
  Vec3 background = Vec3::Zero();

  void validate() const;
};

struct SynthScene {
  Scene scene;
  std::vector<NeuralGaussian> blobs;
};

/// Ground truth comes from the per-pixel reference compositor.
SynthScene synthesize(const SynthSpec& spec);

/// Splats of the analytic blobs for one camera, in blob order.
std::vector<SplattedGaussian> blob_splats(const std::vector<NeuralGaussian>& blobs, const Camera& camera);

/// Writes points.txt, cameras.json, and images/view_NNN.ppm.
void write_scene(const std::filesystem::path& dir, const Scene& scene);

}  // namespace pepgs
