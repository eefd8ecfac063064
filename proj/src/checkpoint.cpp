// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <zlib.h>

namespace pepgs {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

template <class M>
void put_tensor(std::string& out, const std::string& name, const M& m) {
  put_str(out, name);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const float f = static_cast<float>(m(i, j));
      char b[4];
      std::memcpy(b, &f, 4);
      out.append(b, 4);
    }
}

class Reader {
 public:
  explicit Reader(const std::string& s, size_t end) : s_(s), end_(end) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, s_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  float f32() {
    need(4);
    float v;
    std::memcpy(&v, s_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string r = s_.substr(pos_, n);
    pos_ += n;
    return r;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(size_t n) const {
    if (end_ - pos_ < n) throw Error("truncated checkpoint");
  }
  const std::string& s_;
  size_t end_;
  size_t pos_ = 0;
};

std::uint32_t checksum(const std::string& bytes, size_t n) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

}  // namespace

std::string encode_checkpoint(const TrainConfig& config, const Model& model) {
  std::string out = "PEPG";
  put_u32(out, kCheckpointVersion);
  put_str(out, config_to_json(config).dump());
  Model copy = model;
  std::uint32_t count = 1;
  copy.visit([&](const std::string&, ParamGroup, auto&) { ++count; });
  put_u32(out, count);
  put_tensor(out, "anchor.position", model.anchor_positions);
  copy.visit([&](const std::string& name, ParamGroup, auto& m) { put_tensor(out, name, m); });
  put_u32(out, checksum(out, out.size()));
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "PEPG") != 0) throw Error("not a checkpoint (bad magic)");
  const size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != checksum(bytes, body)) throw Error("checkpoint checksum mismatch");

  Reader r(bytes, body);
  r.u32();  // magic, checked above
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  TrainConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid checkpoint config: ") + e.what());
  }

  const std::uint32_t count = r.u32();
  std::map<std::string, RowMat> blobs;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.str();
    const std::uint32_t rows = r.u32(), cols = r.u32();
    RowMat m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
    if (!blobs.emplace(name, std::move(m)).second) throw Error("duplicate tensor " + name);
  }
  if (!r.done()) throw Error("trailing bytes in checkpoint");

  auto pos = blobs.find("anchor.position");
  if (pos == blobs.end() || pos->second.cols() != 3) throw Error("checkpoint missing anchor positions");
  Checkpoint ck{config, Model(config.model, static_cast<int>(pos->second.rows()))};
  ck.model.anchor_positions = pos->second;
  size_t used = 1;
  ck.model.visit([&](const std::string& name, ParamGroup, auto& m) {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw Error("checkpoint missing tensor " + name);
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) throw Error("shape mismatch for tensor " + name);
    m = it->second;
    ++used;
  });
  if (used != blobs.size()) throw Error("checkpoint has unexpected tensors");
  return ck;
}

void save_checkpoint(const std::string& path, const TrainConfig& config, const Model& model) {
  const std::string bytes = encode_checkpoint(config, model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace pepgs
