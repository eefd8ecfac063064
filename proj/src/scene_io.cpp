// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/scene_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace pepgs {

using nlohmann::json;

PointCloud parse_point_cloud(std::istream& in) {
  PointCloud cloud;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<Scalar> vals;
    Scalar v;
    while (ls >> v) vals.push_back(v);
    if (!ls.eof()) throw Error("point cloud line " + std::to_string(lineno) + ": malformed number");
    if (vals.empty()) continue;
    if (vals.size() != 3 && vals.size() != 6)
      throw Error("point cloud line " + std::to_string(lineno) + ": expected 3 or 6 values");
    if (vals.size() == 6) {
      if (cloud.colors.size() != cloud.points.size())
        throw Error("point cloud line " + std::to_string(lineno) + ": mixed colored and uncolored points");
      cloud.colors.emplace_back(vals[3], vals[4], vals[5]);
    } else if (!cloud.colors.empty()) {
      throw Error("point cloud line " + std::to_string(lineno) + ": mixed colored and uncolored points");
    }
    cloud.points.emplace_back(vals[0], vals[1], vals[2]);
  }
  cloud.validate();
  return cloud;
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_point_cloud(in);
}

void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "# x y z r g b\n" << std::setprecision(17);
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    if (!cloud.colors.empty()) {
      const auto& c = cloud.colors[i];
      out << ' ' << c.x() << ' ' << c.y() << ' ' << c.z();
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<Camera> parse_cameras(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("cameras: ") + e.what());
  }
  if (doc.is_object() && doc.contains("cameras")) doc = doc["cameras"];
  if (!doc.is_array()) throw Error("cameras: expected an array of views");
  std::vector<Camera> cams;
  try {
    for (const auto& j : doc) {
      Camera c;
      c.width = j.at("width").get<int>();
      c.height = j.at("height").get<int>();
      c.fx = j.at("fx").get<Scalar>();
      c.fy = j.at("fy").get<Scalar>();
      c.cx = j.at("cx").get<Scalar>();
      c.cy = j.at("cy").get<Scalar>();
      const auto rot = j.at("rotation").get<std::vector<Scalar>>();
      const auto tr = j.at("translation").get<std::vector<Scalar>>();
      if (rot.size() != 9 || tr.size() != 3) throw Error("cameras: rotation needs 9 and translation 3 values");
      for (int r = 0; r < 3; ++r)
        for (int col = 0; col < 3; ++col) c.rotation(r, col) = rot[3 * r + col];
      c.translation = Vec3(tr[0], tr[1], tr[2]);
      c.image_file = j.value("image_file", "");
      c.validate();
      cams.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("cameras: ") + e.what());
  }
  return cams;
}

std::vector<Camera> read_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_cameras(ss.str());
}

std::string dump_cameras(const std::vector<Camera>& cameras) {
  json doc = json::array();
  for (const auto& c : cameras) {
    std::vector<Scalar> rot(9);
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) rot[3 * r + col] = c.rotation(r, col);
    doc.push_back({{"width", c.width},
                   {"height", c.height},
                   {"fx", c.fx},
                   {"fy", c.fy},
                   {"cx", c.cx},
                   {"cy", c.cy},
                   {"rotation", rot},
                   {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}},
                   {"image_file", c.image_file}});
  }
  return doc.dump(2) + "\n";
}

void write_cameras(const std::filesystem::path& path, const std::vector<Camera>& cameras) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_cameras(cameras);
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace pepgs
