// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "pepgs/random.hpp"
#include "pepgs/rasterizer.hpp"
#include "pepgs/scene_io.hpp"

namespace pepgs {

void SynthSpec::validate() const {
  if (shapes.empty()) throw Error("synthetic scene needs at least one shape");
  for (const auto& s : shapes)
    if (s != "sphere" && s != "ellipsoid") throw Error("unknown shape '" + s + "' (expected sphere or ellipsoid)");
  if (views <= 0) throw Error("view count must be positive");
  if (width <= 0 || height <= 0) throw Error("resolution must be positive");
  if (points_per_blob <= 0) throw Error("points_per_blob must be positive");
  if (!(ring_radius > 0) || !(focal_ratio > 0)) throw Error("invalid camera ring");
}

std::vector<SplattedGaussian> blob_splats(const std::vector<NeuralGaussian>& blobs, const Camera& camera) {
  std::vector<SplattedGaussian> splats;
  for (size_t i = 0; i < blobs.size(); ++i) {
    if (auto s = project(blobs[i], camera)) {
      s->source = static_cast<int>(i);
      splats.push_back(*s);
    }
  }
  return splats;
}

SynthScene synthesize(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SynthScene out;
  const auto nb = spec.shapes.size();
  for (size_t b = 0; b < nb; ++b) {
    NeuralGaussian g;
    // Spread blob centers on a loose circle so they overlap only partially.
    const Scalar phi = 2 * std::numbers::pi * static_cast<Scalar>(b) / static_cast<Scalar>(nb);
    const Scalar r = nb == 1 ? 0.0 : 0.55;
    g.mean = Vec3(r * std::cos(phi), uniform(rng, -0.25, 0.25), r * std::sin(phi)) +
             Vec3(uniform(rng, -0.1, 0.1), 0, uniform(rng, -0.1, 0.1));
    if (spec.shapes[b] == "sphere") {
      g.scale = Vec3::Constant(uniform(rng, 0.18, 0.28));
    } else {
      g.scale = Vec3(uniform(rng, 0.12, 0.35), uniform(rng, 0.12, 0.35), uniform(rng, 0.12, 0.35));
      Vec4 q(normal(rng), normal(rng), normal(rng), normal(rng));
      g.rotation = q / q.norm();
    }
    g.covariance = compose_covariance<Scalar>(g.scale, g.rotation);
    g.opacity = uniform(rng, 0.8, 0.95);
    g.color = Vec3(uniform(rng, 0.15, 0.95), uniform(rng, 0.15, 0.95), uniform(rng, 0.15, 0.95));
    out.blobs.push_back(g);

    const Eigen::LLT<Mat3> llt(g.covariance);
    for (int p = 0; p < spec.points_per_blob; ++p) {
      const Vec3 z(normal(rng), normal(rng), normal(rng));
      out.scene.cloud.points.push_back(g.mean + llt.matrixL() * z);
      out.scene.cloud.colors.push_back(g.color);
    }
  }

  for (int v = 0; v < spec.views; ++v) {
    const Scalar theta = 2 * std::numbers::pi * static_cast<Scalar>(v) / static_cast<Scalar>(spec.views);
    const Scalar elev = 0.35 * spec.ring_radius * std::sin(3 * theta);
    const Vec3 eye(spec.ring_radius * std::cos(theta), elev, spec.ring_radius * std::sin(theta));
    Camera cam = Camera::look_at(eye, Vec3::Zero(), Vec3::UnitY(), spec.width, spec.height,
                                 spec.focal_ratio * spec.width);
    char name[32];
    std::snprintf(name, sizeof name, "view_%03d.ppm", v);
    cam.image_file = name;
    ImageBuffer img = rasterize_naive(blob_splats(out.blobs, cam), spec.width, spec.height, spec.background);
    out.scene.views.push_back({cam, std::move(img)});
  }
  return out;
}

void write_scene(const std::filesystem::path& dir, const Scene& scene) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw Error("cannot create " + (dir / "images").string() + ": " + ec.message());
  write_point_cloud(dir / "points.txt", scene.cloud);
  std::vector<Camera> cams;
  for (const auto& v : scene.views) {
    cams.push_back(v.camera);
    write_ppm(dir / "images" / v.camera.image_file, v.image);
  }
  write_cameras(dir / "cameras.json", cams);
}

}  // namespace pepgs
