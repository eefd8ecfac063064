// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace pepgs {

ImageBuffer::ImageBuffer(int w, int h, const Vec3& fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
  for (int k = 0; k < 3; ++k) channels[k] = RowMat::Constant(h, w, fill(k));
}

ImageBuffer& ImageBuffer::clamp01() {
  for (auto& c : channels) c = c.cwiseMax(0.0).cwiseMin(1.0);
  return *this;
}

unsigned char quantize(Scalar v) {
  if (!(v > 0)) return 0;
  if (v >= 1) return 255;
  return static_cast<unsigned char>(std::floor(255 * v + 0.5));
}

std::vector<unsigned char> encode_ppm(const ImageBuffer& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<size_t>(3) * img.width * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int k = 0; k < 3; ++k) out.push_back(quantize(img.channels[k](y, x)));
  return out;
}

namespace {

// Reads one whitespace-delimited header token, skipping `#` comments.
std::string next_token(const std::vector<unsigned char>& b, size_t& pos) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos])) tok.push_back(static_cast<char>(b[pos++]));
  return tok;
}

}  // namespace

ImageBuffer decode_ppm(const std::vector<unsigned char>& bytes) {
  size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw Error("not a binary PPM (P6) image");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(bytes, pos));
    h = std::stoi(next_token(bytes, pos));
    maxval = std::stoi(next_token(bytes, pos));
  } catch (const std::exception&) {
    throw Error("malformed PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) throw Error("unsupported PPM header");
  ++pos;  // single whitespace byte after maxval
  if (bytes.size() < pos + static_cast<size_t>(3) * w * h) throw Error("truncated PPM data");
  ImageBuffer img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k) img.channels[k](y, x) = bytes[pos++] / 255.0;
  return img;
}

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
  const auto bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

}  // namespace pepgs
