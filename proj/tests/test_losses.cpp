// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "pepgs/losses.hpp"
#include "pepgs/random.hpp"

using namespace pepgs;

namespace {

using Plane = std::vector<std::vector<double>>;

ImageBuffer random_image(std::mt19937_64& rng, int w, int h) {
  ImageBuffer img(w, h);
  for (auto& c : img.channels) fill_uniform(c, rng, 0, 1);
  return img;
}

Plane to_plane(const RowMat& m) {
  Plane p(m.rows(), std::vector<double>(m.cols()));
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x) p[y][x] = m(y, x);
  return p;
}

// Direct 2D windowed statistics with zero padding outside the image.
double ssim_oracle(const ImageBuffer& a, const ImageBuffer& b) {
  double win[11][11], z = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) z += (win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5));
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const int yy0 = y + i - 5, xx0 = x + j - 5;
            if (yy0 < 0 || yy0 >= a.height || xx0 < 0 || xx0 >= a.width) continue;
            const double w = win[i][j] / z, u = a.channels[c](yy0, xx0), v = b.channels[c](yy0, xx0);
            mx += w * u;
            my += w * v;
            xx += w * u * u;
            yy += w * v * v;
            xy += w * u * v;
          }
        const double sx = xx - mx * mx, sy = yy - my * my, sxy = xy - mx * my;
        total += (2 * mx * my + c1) * (2 * sxy + c2) / ((mx * mx + my * my + c1) * (sx + sy + c2));
      }
  }
  return total / (3.0 * a.width * a.height);
}

int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

Plane blur5(const Plane& p) {
  const double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  const int h = static_cast<int>(p.size()), w = static_cast<int>(p[0].size());
  Plane out(h, std::vector<double>(w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) out[y][x] += k[i] * k[j] * p[mirror(y + i - 2, h)][mirror(x + j - 2, w)];
  return out;
}

std::vector<Plane> pyramid_oracle(const Plane& img, int k) {
  std::vector<Plane> bands;
  Plane cur = img;
  for (int s = 0; s + 1 < k; ++s) {
    const int h = static_cast<int>(cur.size()), w = static_cast<int>(cur[0].size());
    const Plane b = blur5(cur);
    Plane down((h + 1) / 2, std::vector<double>((w + 1) / 2));
    for (size_t y = 0; y < down.size(); ++y)
      for (size_t x = 0; x < down[0].size(); ++x) down[y][x] = b[2 * y][2 * x];
    Plane up(h, std::vector<double>(w));
    for (size_t y = 0; y < down.size(); ++y)
      for (size_t x = 0; x < down[0].size(); ++x) up[2 * y][2 * x] = 4 * down[y][x];
    const Plane ub = blur5(up);
    Plane band = cur;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) band[y][x] -= ub[y][x];
    bands.push_back(band);
    cur = down;
  }
  bands.push_back(cur);
  return bands;
}

Plane normalize_band(const Plane& r, double sigma) {
  const int h = static_cast<int>(r.size()), w = static_cast<int>(r[0].size());
  Plane out = r;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double f = 0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) f += std::abs(r[mirror(y + i, h)][mirror(x + j, w)]) / 9;
      out[y][x] = r[y][x] / (sigma + f);
    }
  return out;
}

double nlpd_oracle(const ImageBuffer& a, const ImageBuffer& b, int k, double sigma) {
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    const auto pa = pyramid_oracle(to_plane(a.channels[c]), k);
    const auto pb = pyramid_oracle(to_plane(b.channels[c]), k);
    double per = 0;
    for (int s = 0; s < k; ++s) {
      const Plane na = normalize_band(pa[s], sigma), nb = normalize_band(pb[s], sigma);
      double sq = 0, n = 0;
      for (size_t y = 0; y < na.size(); ++y)
        for (size_t x = 0; x < na[0].size(); ++x) {
          sq += (na[y][x] - nb[y][x]) * (na[y][x] - nb[y][x]);
          n += 1;
        }
      per += std::sqrt(sq / n);
    }
    total += per / k;
  }
  return total / 3;
}

// Compares an image gradient with central differences on a sample of entries.
void check_image_grad(const std::function<Scalar(const ImageBuffer&)>& f, ImageBuffer x, const ImageBuffer& grad,
                      int stride = 1) {
  const Scalar h = 1e-6;
  for (int c = 0; c < 3; ++c)
    for (Eigen::Index i = 0; i < x.channels[c].size(); i += stride) {
      Scalar& v = x.channels[c].data()[i];
      const Scalar o = v;
      v = o + h;
      const Scalar lp = f(x);
      v = o - h;
      const Scalar lm = f(x);
      v = o;
      const Scalar num = (lp - lm) / (2 * h), an = grad.channels[c].data()[i];
      const Scalar d = std::abs(num - an);
      CHECK((d <= 1e-3 * std::max(std::abs(num), std::abs(an)) || d < 1e-8));
    }
}

}  // namespace

TEST_CASE("pixel losses") {
  std::mt19937_64 rng(1);
  const ImageBuffer a = random_image(rng, 7, 5), b = random_image(rng, 7, 5);
  CHECK(l2_loss(a, a) == 0);
  ImageBuffer shifted = a;
  for (auto& c : shifted.channels) c.array() += 0.1;
  CHECK(l2_loss(shifted, a) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(l1_loss(shifted, a) == doctest::Approx(0.1).epsilon(1e-12));

  double s2 = 0, s1 = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 7; ++x) {
        const double d = a.channels[c](y, x) - b.channels[c](y, x);
        s2 += d * d;
        s1 += std::abs(d);
      }
  CHECK(l2_loss(a, b) == doctest::Approx(s2 / 105).epsilon(1e-13));
  CHECK(l1_loss(a, b) == doctest::Approx(s1 / 105).epsilon(1e-13));
  CHECK_THROWS_AS(l2_loss(a, ImageBuffer(5, 7)), Error);
  CHECK_THROWS_AS(nlpd_loss(a, ImageBuffer(7, 4)), Error);

  ImageBuffer g;
  l2_loss(a, b, &g);
  check_image_grad([&](const ImageBuffer& x) { return l2_loss(x, b); }, a, g);
  l1_loss(a, b, &g);
  check_image_grad([&](const ImageBuffer& x) { return l1_loss(x, b); }, a, g);
}

TEST_CASE("ssim") {
  std::mt19937_64 rng(2);
  const ImageBuffer a = random_image(rng, 16, 16), b = random_image(rng, 16, 16);
  CHECK(dssim_loss(a, a) == doctest::Approx(0).scale(1));
  CHECK(std::abs(ssim(a, a) - 1) < 1e-12);
  CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-12);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);

  const ImageBuffer odd = random_image(rng, 13, 9), odd2 = random_image(rng, 13, 9);
  CHECK(std::abs(ssim(odd, odd2) - ssim_oracle(odd, odd2)) < 1e-12);

  // Inverted checkerboard.
  ImageBuffer check(16, 16), inv(16, 16);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        check.channels[c](y, x) = (x + y) % 2;
        inv.channels[c](y, x) = 1 - check.channels[c](y, x);
      }
  const Scalar d = dssim_loss(inv, check);
  CHECK(d > 0);
  CHECK(d <= 1);

  ImageBuffer g;
  dssim_loss(odd, odd2, &g);
  check_image_grad([&](const ImageBuffer& x) { return dssim_loss(x, odd2); }, odd, g);
}

TEST_CASE("volume loss") {
  RowMat s(1, 3);
  s << 1, 2, 3;
  CHECK(volume_loss(s) == 6);
  CHECK(volume_loss(RowMat::Ones(9, 3)) == 9);
  CHECK(volume_loss(RowMat(0, 3)) == 0);
  std::mt19937_64 rng(3);
  RowMat r(20, 3);
  fill_uniform(r, rng, 0.01, 2);
  double want = 0;
  for (int i = 0; i < 20; ++i) want += r(i, 0) * r(i, 1) * r(i, 2);
  RowMat g;
  CHECK(volume_loss(r, &g) == doctest::Approx(want).epsilon(1e-14));
  CHECK(g(4, 0) == doctest::Approx(r(4, 1) * r(4, 2)));
  CHECK(g(4, 1) == doctest::Approx(r(4, 0) * r(4, 2)));
  CHECK(g(4, 2) == doctest::Approx(r(4, 0) * r(4, 1)));
}

TEST_CASE("laplacian pyramid") {
  std::mt19937_64 rng(4);
  CHECK(default_pyramid_scales(64, 64) == 5);
  CHECK(default_pyramid_scales(8, 64) == 3);
  CHECK(default_pyramid_scales(1, 1) == 0);

  const RowMat flat = RowMat::Constant(20, 24, 0.37);
  const auto pf = build_pyramid(flat, 4);
  REQUIRE(pf.scales() == 4);
  for (int i = 0; i < 3; ++i) CHECK(pf.bands[i].cwiseAbs().maxCoeff() < 1e-15);
  CHECK((pf.bands[3].array() - 0.37).abs().maxCoeff() < 1e-15);

  RowMat img(32, 32);
  fill_uniform(img, rng, 0, 1);
  const auto one = build_pyramid(img, 1);
  REQUIRE(one.scales() == 1);
  CHECK(one.bands[0] == img);

  const auto p4 = build_pyramid(img, 4);
  CHECK((collapse_pyramid(p4) - img).cwiseAbs().maxCoeff() < 1e-6);
  const auto want = pyramid_oracle(to_plane(img), 4);
  for (int s = 0; s < 4; ++s)
    for (Eigen::Index y = 0; y < p4.bands[s].rows(); ++y)
      for (Eigen::Index x = 0; x < p4.bands[s].cols(); ++x) CHECK(std::abs(p4.bands[s](y, x) - want[s][y][x]) < 1e-12);

  CHECK_THROWS_AS(build_pyramid(RowMat::Zero(7, 40), 4), Error);
  CHECK_THROWS_AS(build_pyramid(img, 0), Error);
  CHECK_NOTHROW(build_pyramid(RowMat::Zero(8, 40), 4));
}

TEST_CASE("pyramid adjoint is the transpose of the analysis operator") {
  std::mt19937_64 rng(5);
  for (auto [h, w, k] : {std::tuple{16, 16, 3}, std::tuple{13, 21, 4}, std::tuple{9, 9, 2}}) {
    RowMat x(h, w);
    fill_uniform(x, rng, -1, 1);
    const auto pyr = build_pyramid(x, k);
    std::vector<RowMat> g;
    Scalar lhs = 0;
    for (const auto& b : pyr.bands) {
      RowMat r(b.rows(), b.cols());
      fill_uniform(r, rng, -1, 1);
      lhs += r.cwiseProduct(b).sum();
      g.push_back(r);
    }
    const RowMat back = build_pyramid_adjoint(g, h, w);
    CHECK(std::abs(lhs - back.cwiseProduct(x).sum()) < 1e-10);
  }
}

TEST_CASE("nlpd") {
  std::mt19937_64 rng(6);
  const ImageBuffer a = random_image(rng, 8, 8), b = random_image(rng, 8, 8);
  NlpdParams p;
  p.scales = 2;
  CHECK(std::abs(nlpd_loss(a, b, p) - nlpd_oracle(a, b, 2, 0.1)) < 1e-12);
  CHECK(nlpd_loss(a, a, p) == 0);

  const ImageBuffer c = random_image(rng, 19, 12), d = random_image(rng, 19, 12);
  CHECK(std::abs(nlpd_loss(c, d) - nlpd_oracle(c, d, 3, 0.1)) < 1e-12);

  NlpdParams bad;
  bad.sigma = 0;
  CHECK_THROWS_AS(nlpd_loss(a, b, bad), Error);

  ImageBuffer g;
  nlpd_loss(c, d, {}, &g);
  check_image_grad([&](const ImageBuffer& x) { return nlpd_loss(x, d); }, c, g);
}

TEST_CASE("total loss composes its parts") {
  std::mt19937_64 rng(7);
  const ImageBuffer a = random_image(rng, 12, 10), b = random_image(rng, 12, 10);
  RowMat s(6, 3);
  fill_uniform(s, rng, 0.05, 0.5);
  LossWeights w;
  const auto out = total_loss(a, b, s, w);
  const Scalar base = 0.8 * l2_loss(a, b) + 0.2 * dssim_loss(a, b) + 0.01 * volume_loss(s);
  CHECK(out.total == doctest::Approx(base * 0.8 + 0.2 * nlpd_loss(a, b)).epsilon(1e-14));
  CHECK(out.base == doctest::Approx(base).epsilon(1e-14));

  LossWeights off = w;
  off.nlpd = 0;
  CHECK(total_loss(a, b, s, off).total == doctest::Approx(base).epsilon(1e-14));

  // Raising the NLPD weight moves the total toward the NLPD term.
  Scalar prev = out.total;
  const Scalar target = out.nlpd;
  for (Scalar l : {0.4, 0.6, 0.8}) {
    LossWeights m = w;
    m.nlpd = l;
    const Scalar t = total_loss(a, b, s, m).total;
    CHECK(std::abs(t - target) < std::abs(prev - target));
    prev = t;
  }

  w.use_l1 = true;
  CHECK(total_loss(a, b, s, w).recon == l1_loss(a, b));

  LossWeights bad;
  bad.nlpd = 1;
  CHECK_THROWS_AS(total_loss(a, b, s, bad), Error);

  ImageBuffer g;
  RowMat gs;
  LossWeights dw;
  total_loss(a, b, s, dw, {}, &g, &gs);
  check_image_grad([&](const ImageBuffer& x) { return total_loss(x, b, s, dw).total; }, a, g, 3);
  const Scalar h = 1e-6;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    RowMat sp = s, sm = s;
    sp.data()[i] += h;
    sm.data()[i] -= h;
    const Scalar num = (total_loss(a, b, sp, dw).total - total_loss(a, b, sm, dw).total) / (2 * h);
    CHECK(gs.data()[i] == doctest::Approx(num).epsilon(1e-5));
  }
}

TEST_CASE("losses are nonnegative") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 10; ++t) {
    const ImageBuffer a = random_image(rng, 16, 16), b = random_image(rng, 16, 16);
    RowMat s(3, 3);
    fill_uniform(s, rng, 0.01, 1);
    const auto out = total_loss(a, b, s, {});
    CHECK(out.recon >= 0);
    CHECK(out.dssim >= 0);
    CHECK(out.nlpd >= 0);
    CHECK(out.total >= 0);
  }
}

TEST_CASE("psnr") {
  std::mt19937_64 rng(9);
  const ImageBuffer a = random_image(rng, 6, 6), b = random_image(rng, 6, 6);
  CHECK(psnr(a, a) == 100);
  ImageBuffer s = a;
  for (auto& c : s.channels) c.array() += 0.1;
  CHECK(psnr(s, a) == doctest::Approx(20).epsilon(1e-12));
  CHECK(psnr(a, b) == doctest::Approx(-10 * std::log10(l2_loss(a, b))).epsilon(1e-14));
}
