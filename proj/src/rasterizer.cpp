// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace pepgs {

std::optional<SplattedGaussian> project(const NeuralGaussian& g, const Camera& camera) {
  const Vec3 t = camera.rotation * g.mean + camera.translation;
  if (!(t.z() > kNearPlane)) return std::nullopt;
  const Scalar z = t.z(), iz = 1 / z;
  Eigen::Matrix<Scalar, 2, 3> jac;
  jac << camera.fx * iz, 0, -camera.fx * t.x() * iz * iz, 0, camera.fy * iz, -camera.fy * t.y() * iz * iz;
  const Eigen::Matrix<Scalar, 2, 3> m = jac * camera.rotation;

  SplattedGaussian s;
  s.mean = Vec2(camera.fx * t.x() * iz + camera.cx, camera.fy * t.y() * iz + camera.cy);
  s.cov = m * g.covariance * m.transpose();
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  s.cov.diagonal().array() += kLowPass;
  s.depth = z;
  s.opacity = g.opacity;
  s.color = g.color;

  const Scalar rx = std::sqrt(kExtentChi2 * s.cov(0, 0));
  const Scalar ry = std::sqrt(kExtentChi2 * s.cov(1, 1));
  if (s.mean.x() + rx < 0 || s.mean.x() - rx > camera.width - 1 || s.mean.y() + ry < 0 ||
      s.mean.y() - ry > camera.height - 1)
    return std::nullopt;
  return s;
}

ProjectGrad project_backward(const NeuralGaussian& g, const Camera& camera, const SplatGrad& grad) {
  const Vec3 t = camera.rotation * g.mean + camera.translation;
  const Scalar x = t.x(), y = t.y(), z = t.z(), iz = 1 / z, iz2 = iz * iz, iz3 = iz2 * iz;
  const Scalar fx = camera.fx, fy = camera.fy;
  Eigen::Matrix<Scalar, 2, 3> jac;
  jac << fx * iz, 0, -fx * x * iz2, 0, fy * iz, -fy * y * iz2;
  const Eigen::Matrix<Scalar, 2, 3> m = jac * camera.rotation;
  const Mat2 gc = cov_grad_matrix(grad.cov);

  ProjectGrad out;
  out.cov = m.transpose() * gc * m;
  const Eigen::Matrix<Scalar, 2, 3> dm = 2 * gc * m * g.covariance;
  const Eigen::Matrix<Scalar, 2, 3> dj = dm * camera.rotation.transpose();

  Vec3 dt;
  dt.x() = grad.mean.x() * fx * iz - dj(0, 2) * fx * iz2;
  dt.y() = grad.mean.y() * fy * iz - dj(1, 2) * fy * iz2;
  dt.z() = -grad.mean.x() * fx * x * iz2 - grad.mean.y() * fy * y * iz2 - dj(0, 0) * fx * iz2 +
           dj(0, 2) * 2 * fx * x * iz3 - dj(1, 1) * fy * iz2 + dj(1, 2) * 2 * fy * y * iz3;
  out.mean = camera.rotation.transpose() * dt;
  return out;
}

Scalar splat_falloff(const SplattedGaussian& s, Scalar x, Scalar y) {
  const Vec2 d(x - s.mean.x(), y - s.mean.y());
  return std::exp(-0.5 * d.dot(s.cov.inverse() * d));
}

std::vector<int> depth_order(const std::vector<SplattedGaussian>& splats) {
  std::vector<int> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return splats[a].depth < splats[b].depth; });
  return order;
}

namespace {

struct Prepared {
  Scalar mx, my;
  Scalar ca, cb, cc;  // inverse covariance entries xx, xy, yy
  Scalar opacity;     // clamped to [0, 1]
  Vec3 color;
  int x0, x1, y0, y1;  // conservative pixel bounds of the 99% ellipse
  int index;           // position in the caller's splat vector
};

std::vector<Prepared> prepare(const std::vector<SplattedGaussian>& splats) {
  std::vector<Prepared> out;
  out.reserve(splats.size());
  for (int idx : depth_order(splats)) {
    const auto& s = splats[idx];
    const Scalar det = s.cov(0, 0) * s.cov(1, 1) - s.cov(0, 1) * s.cov(1, 0);
    if (!(det > 0)) continue;
    const Scalar op = std::clamp(s.opacity, Scalar(0), Scalar(1));
    if (!(op > 0)) continue;
    Prepared p;
    p.mx = s.mean.x();
    p.my = s.mean.y();
    p.ca = s.cov(1, 1) / det;
    p.cb = -0.5 * (s.cov(0, 1) + s.cov(1, 0)) / det;
    p.cc = s.cov(0, 0) / det;
    p.opacity = op;
    p.color = s.color;
    const Scalar rx = std::sqrt(kExtentChi2 * s.cov(0, 0)) + 1;
    const Scalar ry = std::sqrt(kExtentChi2 * s.cov(1, 1)) + 1;
    const Scalar lim = 1e9;
    p.x0 = static_cast<int>(std::floor(std::clamp(p.mx - rx, -lim, lim)));
    p.x1 = static_cast<int>(std::ceil(std::clamp(p.mx + rx, -lim, lim)));
    p.y0 = static_cast<int>(std::floor(std::clamp(p.my - ry, -lim, lim)));
    p.y1 = static_cast<int>(std::ceil(std::clamp(p.my + ry, -lim, lim)));
    p.index = idx;
    out.push_back(p);
  }
  return out;
}

// Blend weight of splat p at pixel center (x, y); zero outside the 99% ellipse.
inline Scalar blend_weight(const Prepared& p, Scalar x, Scalar y, Scalar& falloff) {
  const Scalar dx = x - p.mx, dy = y - p.my;
  const Scalar power = p.ca * dx * dx + 2 * p.cb * dx * dy + p.cc * dy * dy;
  if (!(power <= kExtentChi2)) return 0;
  falloff = std::exp(-0.5 * power);
  return p.opacity * falloff;
}

struct PixelResult {
  Vec3 color;
  Scalar transmittance;
  Scalar accumulated;
};

template <class Ids>
PixelResult composite_pixel(const std::vector<Prepared>& prep, const Ids& ids, int px, int py, const Vec3& bg) {
  Vec3 c = Vec3::Zero();
  Scalar t = 1, acc = 0;
  for (int i : ids) {
    const Prepared& p = prep[i];
    Scalar falloff = 0;
    const Scalar a = blend_weight(p, px, py, falloff);
    if (!(a > 0)) continue;
    const Scalar w = a * t;
    c += w * p.color;
    acc += w;
    t *= 1 - a;
    if (t < kMinTransmittance) break;
  }
  c += t * bg;
  return {c, t, acc};
}

struct Tile {
  int x0, y0, x1, y1;  // inclusive pixel range
  std::vector<int> ids;  // indices into the prepared list, front to back
};

std::vector<Tile> build_tiles(const std::vector<Prepared>& prep, int width, int height, int tile) {
  if (tile <= 0) throw Error("tile size must be positive");
  const int tx = (width + tile - 1) / tile, ty = (height + tile - 1) / tile;
  std::vector<Tile> tiles;
  tiles.reserve(static_cast<size_t>(tx) * ty);
  for (int j = 0; j < ty; ++j)
    for (int i = 0; i < tx; ++i)
      tiles.push_back({i * tile, j * tile, std::min(width, (i + 1) * tile) - 1, std::min(height, (j + 1) * tile) - 1,
                       {}});
  for (int n = 0; n < static_cast<int>(prep.size()); ++n) {
    const Prepared& p = prep[n];
    const int i0 = std::max(0, p.x0 / tile - 1), i1 = std::min(tx - 1, p.x1 / tile + 1);
    const int j0 = std::max(0, p.y0 / tile - 1), j1 = std::min(ty - 1, p.y1 / tile + 1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) {
        Tile& t = tiles[static_cast<size_t>(j) * tx + i];
        if (p.x1 < t.x0 || p.x0 > t.x1 || p.y1 < t.y0 || p.y0 > t.y1) continue;
        t.ids.push_back(n);
      }
  }
  return tiles;
}

template <class F>
void parallel_for(int count, int threads, F&& body) {
  threads = std::clamp(threads, 1, std::max(1, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < count; i += threads) body(i);
    });
  for (auto& th : pool) th.join();
}

ImageBuffer make_output(int width, int height) {
  ImageBuffer img(width, height);
  img.transmittance = RowMat::Ones(height, width);
  img.accumulated = RowMat::Zero(height, width);
  return img;
}

void store(ImageBuffer& img, int x, int y, const PixelResult& r) {
  img.set_pixel(x, y, r.color);
  img.transmittance(y, x) = r.transmittance;
  img.accumulated(y, x) = r.accumulated;
}

}  // namespace

ImageBuffer rasterize(const std::vector<SplattedGaussian>& splats, int width, int height, const Vec3& background,
                      const RasterOptions& options) {
  const auto prep = prepare(splats);
  const auto tiles = build_tiles(prep, width, height, options.tile_size);
  ImageBuffer img = make_output(width, height);
  parallel_for(static_cast<int>(tiles.size()), options.threads, [&](int ti) {
    const Tile& t = tiles[ti];
    for (int y = t.y0; y <= t.y1; ++y)
      for (int x = t.x0; x <= t.x1; ++x) store(img, x, y, composite_pixel(prep, t.ids, x, y, background));
  });
  return img;
}

ImageBuffer rasterize_naive(const std::vector<SplattedGaussian>& splats, int width, int height,
                            const Vec3& background) {
  const auto prep = prepare(splats);
  std::vector<int> all(prep.size());
  std::iota(all.begin(), all.end(), 0);
  ImageBuffer img = make_output(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) store(img, x, y, composite_pixel(prep, all, x, y, background));
  return img;
}

std::vector<SplatGrad> rasterize_backward(const std::vector<SplattedGaussian>& splats, int width, int height,
                                          const Vec3& background, const ImageBuffer& grad_image,
                                          const RasterOptions& options) {
  if (grad_image.width != width || grad_image.height != height) throw Error("gradient image size mismatch");
  const auto prep = prepare(splats);
  const auto tiles = build_tiles(prep, width, height, options.tile_size);

  // Per-tile partial sums, reduced in tile order so the result does not depend
  // on how tiles were scheduled.
  std::vector<std::vector<SplatGrad>> partial(tiles.size());
  parallel_for(static_cast<int>(tiles.size()), options.threads, [&](int ti) {
    const Tile& tile = tiles[ti];
    auto& local = partial[ti];
    local.assign(tile.ids.size(), SplatGrad{});
    struct Hit {
      int slot;
      Scalar a, falloff, t;
    };
    std::vector<Hit> hits;
    for (int y = tile.y0; y <= tile.y1; ++y) {
      for (int x = tile.x0; x <= tile.x1; ++x) {
        const Vec3 g = grad_image.pixel(x, y);
        if (g.isZero(0)) continue;
        hits.clear();
        Scalar t = 1;
        for (int slot = 0; slot < static_cast<int>(tile.ids.size()); ++slot) {
          const Prepared& p = prep[tile.ids[slot]];
          Scalar falloff = 0;
          const Scalar a = blend_weight(p, x, y, falloff);
          if (!(a > 0)) continue;
          hits.push_back({slot, a, falloff, t});
          t *= 1 - a;
          if (t < kMinTransmittance) break;
        }
        Vec3 behind = background;
        for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
          const Prepared& p = prep[tile.ids[it->slot]];
          SplatGrad& sg = local[it->slot];
          sg.color += g * (it->a * it->t);
          const Scalar da = it->t * g.dot(p.color - behind);
          behind = it->a * p.color + (1 - it->a) * behind;

          sg.opacity += da * it->falloff;
          // a = opacity * exp(-power / 2)
          const Scalar dpower = -0.5 * it->a * da;
          const Scalar dx = x - p.mx, dy = y - p.my;
          // power = ca dx^2 + 2 cb dx dy + cc dy^2
          sg.mean.x() += -dpower * 2 * (p.ca * dx + p.cb * dy);
          sg.mean.y() += -dpower * 2 * (p.cb * dx + p.cc * dy);
          // d/dconic as a symmetric matrix, then through the 2x2 inverse.
          Mat2 dconic;
          dconic << dpower * dx * dx, dpower * dx * dy, dpower * dx * dy, dpower * dy * dy;
          Mat2 conic;
          conic << p.ca, p.cb, p.cb, p.cc;
          const Mat2 dcov = -conic * dconic * conic;
          sg.cov += Vec3(dcov(0, 0), dcov(0, 1) + dcov(1, 0), dcov(1, 1));
        }
      }
    }
  });

  std::vector<SplatGrad> grads(splats.size());
  for (size_t ti = 0; ti < tiles.size(); ++ti) {
    for (size_t slot = 0; slot < tiles[ti].ids.size(); ++slot) {
      const Prepared& p = prep[tiles[ti].ids[slot]];
      const SplatGrad& l = partial[ti][slot];
      SplatGrad& dst = grads[p.index];
      dst.mean += l.mean;
      dst.cov += l.cov;
      dst.opacity += l.opacity;
      dst.color += l.color;
    }
  }
  // Opacity enters through clamp(opacity, 0, 1).
  for (size_t i = 0; i < splats.size(); ++i)
    if (splats[i].opacity > 1) grads[i].opacity = 0;
  return grads;
}

}  // namespace pepgs
