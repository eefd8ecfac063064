// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pepgs/scene.hpp"

namespace pepgs {

// Point cloud text: one `x y z [r g b]` per line, `#` starts a comment.
PointCloud parse_point_cloud(std::istream& in);
PointCloud read_point_cloud(const std::filesystem::path& path);
void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud);

// Camera list: a JSON array of {width, height, fx, fy, cx, cy, rotation[9],
// translation[3], image_file}, rotation row-major world-to-camera.
std::vector<Camera> parse_cameras(const std::string& json_text);
std::vector<Camera> read_cameras(const std::filesystem::path& path);
std::string dump_cameras(const std::vector<Camera>& cameras);
void write_cameras(const std::filesystem::path& path, const std::vector<Camera>& cameras);

}  // namespace pepgs
