// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "pepgs/types.hpp"

namespace pepgs {

/// H x W RGB image stored as three row-major planes.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::array<RowMat, 3> channels;
  // Filled by the rasterizer: final transmittance and accumulated blend weight.
  RowMat transmittance;
  RowMat accumulated;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, const Vec3& fill = Vec3::Zero());

  Vec3 pixel(int x, int y) const { return {channels[0](y, x), channels[1](y, x), channels[2](y, x)}; }
  void set_pixel(int x, int y, const Vec3& c) {
    for (int k = 0; k < 3; ++k) channels[k](y, x) = c(k);
  }
  bool same_shape(const ImageBuffer& o) const { return width == o.width && height == o.height; }
  ImageBuffer& clamp01();
};

/// 8-bit quantization used by PPM output: floor(255 * clamp(v, 0, 1) + 0.5).
unsigned char quantize(Scalar v);

/// Binary P6, maxval 255, row-major RGB.
std::vector<unsigned char> encode_ppm(const ImageBuffer& img);
ImageBuffer decode_ppm(const std::vector<unsigned char>& bytes);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::filesystem::path& path);

}  // namespace pepgs
