// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "grad_check.hpp"
#include "pepgs/checkpoint.hpp"
#include "pepgs/synth.hpp"

using namespace pepgs;
using pepgs::testing::micro_scene;

namespace {

// A few points near the origin seen by one 16x16 camera.
Scene solid_scene(Vec3 color, int views = 1) {
  Scene s;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) s.cloud.points.push_back(Vec3(normal(rng), normal(rng), normal(rng)) * 0.3);
  for (int v = 0; v < views; ++v) {
    View view;
    const Scalar th = 0.3 * v;
    view.camera = Camera::look_at(Vec3(3 * std::sin(th), 0.3, -3 * std::cos(th)), Vec3::Zero(), Vec3::UnitY(), 16, 16, 20);
    view.image = ImageBuffer(16, 16);
    for (int c = 0; c < 3; ++c) view.image.channels[c].setConstant(color(c));
    s.views.push_back(view);
  }
  return s;
}

TrainConfig small_config(int iterations) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.seed = 4;
  cfg.model.k = 4;
  cfg.model.voxel_size = 0.25;
  return cfg;
}

bool same_params(Model a, Model b) {
  std::vector<MatX> pa, pb;
  a.visit([&](const std::string&, ParamGroup, auto& m) { pa.push_back(m); });
  b.visit([&](const std::string&, ParamGroup, auto& m) { pb.push_back(m); });
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i] != pb[i]) return false;
  return a.anchor_positions == b.anchor_positions;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("pepgs_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("adam update rule") {
  AdamConfig c;
  MatX p = MatX::Constant(2, 2, 0.5), g = MatX::Zero(2, 2), m = g, v = g;
  adam_update(p, g, m, v, 0.1, 1, c);
  CHECK((p.array() == 0.5).all());

  MatX x = MatX::Constant(1, 1, 2.0), gx = MatX::Ones(1, 1), mx = MatX::Zero(1, 1), vx = mx;
  adam_update(x, gx, mx, vx, 0.01, 1, c);
  CHECK(x(0, 0) == doctest::Approx(2.0 - 0.01).epsilon(1e-12));

  // f(x) = (x - 3)^2 from x = 0.
  MatX q = MatX::Zero(1, 1), mq = q, vq = q;
  Scalar prev = 9;
  for (int t = 1; t <= 10; ++t) {
    const MatX gq = MatX::Constant(1, 1, 2 * (q(0, 0) - 3));
    adam_update(q, gq, mq, vq, 0.1, t, c);
    const Scalar f = (q(0, 0) - 3) * (q(0, 0) - 3);
    CHECK(f < prev);
    prev = f;
  }
}

TEST_CASE("adam step on a model clears gradients and keeps float32 values") {
  auto s = micro_scene();
  Model g = pepgs::testing::analytic_gradient(s.model, s.view, s.config);
  Adam adam(s.model);
  const Model before = s.model;
  adam.step(s.model, g);
  CHECK(adam.steps() == 1);
  g.visit([](const std::string&, ParamGroup, auto& m) { CHECK(m.cwiseAbs().maxCoeff() == 0); });
  bool moved = false;
  Model b = before;
  std::vector<MatX> old;
  b.visit([&](const std::string&, ParamGroup, auto& m) { old.push_back(m); });
  size_t i = 0;
  s.model.visit([&](const std::string&, ParamGroup, auto& m) {
    moved |= m != old[i++];
    for (Eigen::Index j = 0; j < m.size(); ++j) CHECK(m.data()[j] == static_cast<double>(static_cast<float>(m.data()[j])));
  });
  CHECK(moved);

  Model z = s.model.zeros_like();
  Adam still(s.model);
  const Model kept = s.model;
  still.step(s.model, z);
  CHECK(same_params(kept, s.model));
}

TEST_CASE("non-finite gradients are reported by name") {
  auto s = micro_scene();
  Model g = s.model.zeros_like();
  CHECK_NOTHROW(check_finite(g));
  g.log_scales(1, 2) = std::numeric_limits<double>::quiet_NaN();
  try {
    check_finite(g);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("anchor.log_scale") != std::string::npos);
  }
}

TEST_CASE("a detached loss gives zero gradients") {
  auto s = micro_scene();
  ForwardCache c;
  const auto out = render_view(s.model, s.view.camera, &c);
  Model g = s.model.zeros_like();
  backward_view(s.model, s.view.camera, c, ImageBuffer(8, 8), RowMat::Zero(out.scales.rows(), 3), g);
  g.visit([](const std::string&, ParamGroup, auto& m) { CHECK(m.cwiseAbs().maxCoeff() == 0); });
}

TEST_CASE("view split") {
  auto s = split_views(10);
  CHECK(s.test == std::vector<int>{0, 8});
  CHECK(s.train == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 9});
  s = split_views(1);
  CHECK(s.train == std::vector<int>{0});
  CHECK(s.test == std::vector<int>{0});
  s = split_views(17);
  CHECK(s.test == std::vector<int>{0, 8, 16});
  CHECK(s.train.size() == 14);
}

TEST_CASE("zero iterations returns the initialization") {
  const Scene sc = solid_scene(Vec3(0.8, 0.2, 0.1));
  const TrainConfig cfg = small_config(0);
  const auto r = train(sc.cloud, sc.views, cfg);
  CHECK(r.log.empty());
  CHECK_FALSE(r.aborted);
  CHECK(encode_checkpoint(cfg, r.model) == encode_checkpoint(cfg, Model::create(sc.cloud, cfg.model, cfg.seed)));
}

TEST_CASE("training reduces the reconstruction error on a solid image") {
  const Scene sc = solid_scene(Vec3(0.8, 0.2, 0.1));
  const TrainConfig cfg = small_config(200);
  const auto r = train(sc.cloud, sc.views, cfg);
  REQUIRE(r.log.size() == 200);
  CHECK_FALSE(r.aborted);
  const Scalar first = r.log.front().loss.recon;
  const Scalar last = view_loss(r.model, sc.views[0], cfg).recon;
  CHECK(last < first);
  CHECK(r.log.back().loss.recon < first);
}

TEST_CASE("training is deterministic and logs the loop forward") {
  const Scene sc = solid_scene(Vec3(0.3, 0.6, 0.9), 3);
  TrainConfig cfg = small_config(12);
  cfg.snapshot_every = 5;
  std::vector<Model> snaps;
  TrainHooks hooks;
  hooks.snapshot = [&](int, const Model& m) { snaps.push_back(m); };
  const auto a = train(sc.cloud, sc.views, cfg, hooks);
  const auto b = train(sc.cloud, sc.views, cfg);
  CHECK(format_log(a.log) == format_log(b.log));
  CHECK(encode_checkpoint(cfg, a.model) == encode_checkpoint(cfg, b.model));
  REQUIRE(snaps.size() == 2);
  // Iteration 11 sees view 10 % 3 = 1, starting from the state after 10 steps.
  CHECK(view_loss(snaps[1], sc.views[1], cfg).total == a.log[10].loss.total);
  CHECK(view_loss(snaps[0], sc.views[2], cfg).total == a.log[5].loss.total);

  const std::string csv = format_log(a.log);
  CHECK(csv.rfind("iter,loss,l2,dssim,vol,nlpd\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
  const std::string row = csv.substr(csv.find('\n') + 1, csv.find('\n', csv.find('\n') + 1) - csv.find('\n') - 1);
  const auto c1 = row.find(','), c2 = row.find(',', c1 + 1);
  CHECK(std::stod(row.substr(c1 + 1, c2 - c1 - 1)) == a.log[0].loss.total);
}

TEST_CASE("non-finite loss aborts with the last good model") {
  Scene sc = solid_scene(Vec3(0.5, 0.5, 0.5), 3);
  sc.views[2].image.channels[1](4, 4) = std::numeric_limits<double>::quiet_NaN();
  const TrainConfig cfg = small_config(10);
  const auto r = train(sc.cloud, sc.views, cfg);
  CHECK(r.aborted);
  CHECK(r.abort_reason.find("iteration 3") != std::string::npos);
  CHECK(r.log.size() == 2);
  TrainConfig two = cfg;
  two.iterations = 2;
  CHECK(same_params(r.model, train(sc.cloud, sc.views, two).model));
}

TEST_CASE("disabling nlpd removes it from the objective") {
  const Scene sc = solid_scene(Vec3(0.5, 0.1, 0.5));
  TrainConfig cfg = small_config(1);
  cfg.disable_nlpd = true;
  CHECK(cfg.effective_loss().nlpd == 0);
  const auto r = train(sc.cloud, sc.views, cfg);
  CHECK(r.log[0].loss.total == r.log[0].loss.base);
  CHECK(r.log[0].loss.nlpd > 0);
}

TEST_CASE("checkpoint round trip") {
  const Scene sc = solid_scene(Vec3(0.8, 0.2, 0.1));
  TrainConfig cfg = small_config(3);
  cfg.model.disable_kan_op = true;
  const auto r = train(sc.cloud, sc.views, cfg);
  const std::string bytes = encode_checkpoint(cfg, r.model);
  CHECK(bytes.substr(0, 4) == "PEPG");
  const Checkpoint ck = decode_checkpoint(bytes);
  CHECK(same_params(ck.model, r.model));
  CHECK(config_to_json(ck.config) == config_to_json(cfg));
  CHECK(encode_checkpoint(ck.config, ck.model) == bytes);

  const auto dir = temp_dir("ckpt");
  save_checkpoint((dir / "a.pepg").string(), cfg, r.model);
  const Checkpoint back = load_checkpoint((dir / "a.pepg").string());
  save_checkpoint((dir / "b.pepg").string(), back.config, back.model);
  std::ifstream fa(dir / "a.pepg", std::ios::binary), fb(dir / "b.pepg", std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(fa), {}) == std::string(std::istreambuf_iterator<char>(fb), {}));

  std::string bad = bytes;
  bad[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("checksum"), Error);
  bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("magic"), Error);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 9)), Error);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.pepg").string()), Error);
}

TEST_CASE("render") {
  auto s = micro_scene();
  const ImageBuffer a = render(s.model, s.view.camera), b = render(s.model, s.view.camera);
  for (int c = 0; c < 3; ++c) CHECK(a.channels[c] == b.channels[c]);

  // Zeroed color head: every Gaussian is mid-gray, so pixels are 0.5 * coverage over black.
  s.model.hgsa.color.weight.setZero();
  s.model.hgsa.color.bias.setZero();
  const ImageBuffer g = render_view(s.model, s.view.camera).image;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const Vec3 p = g.pixel(x, y);
      CHECK(p(0) == p(1));
      CHECK(p(1) == p(2));
      CHECK(std::abs(p(0) - 0.5 * g.accumulated(y, x)) < 1e-12);
    }
  CHECK(g.accumulated.maxCoeff() > 0);
}

TEST_CASE("evaluate") {
  auto s = micro_scene();
  View perfect = s.view;
  perfect.image = render(s.model, s.view.camera);
  const Metrics one = evaluate(s.model, {perfect}, {3});
  REQUIRE(one.views.size() == 1);
  CHECK(one.views[0].view == 3);
  CHECK(one.views[0].psnr == 100);
  CHECK(one.views[0].ssim == doctest::Approx(1).epsilon(1e-12));
  CHECK(one.views[0].nlpd == 0);
  CHECK(one.mean_psnr == one.views[0].psnr);
  CHECK(one.mean_ssim == one.views[0].ssim);

  const Metrics two = evaluate(s.model, {perfect, s.view}, {0, 8});
  const ImageBuffer img = render(s.model, s.view.camera);
  CHECK(two.views[1].psnr == psnr(img, s.view.image));
  CHECK(two.views[1].ssim == ssim(img, s.view.image));
  CHECK(two.views[1].nlpd == nlpd_loss(img, s.view.image));
  CHECK(two.mean_psnr == doctest::Approx((100 + two.views[1].psnr) / 2));
  const auto j = metrics_to_json(two);
  CHECK(j["views"].size() == 2);
  CHECK(metrics_table(two).find("mean") != std::string::npos);
  CHECK_THROWS_AS(evaluate(s.model, {}, {}), Error);
}

TEST_CASE("config defaults and parsing") {
  TrainConfig cfg;
  CHECK(cfg.model.k == 10);
  CHECK(cfg.model.heads == 7);
  CHECK(cfg.iterations == 30000);
  CHECK(cfg.loss.nlpd == 0.2);
  CHECK(cfg.loss.dssim == 0.2);
  CHECK(cfg.loss.vol == 0.01);
  CHECK(cfg.adam.eps == 1e-15);
  const auto j = config_to_json(cfg);
  CHECK(j.size() == config_keys().size());
  CHECK(j["k"] == 10);
  CHECK(j["lambda_nlpd"] == 0.2);

  apply_config_text(cfg, "# comment\n iterations = 12 \nk=3\n\ndisable_hgsa = true # trailing\nbackground = 0.1 0.2 0.3\n");
  CHECK(cfg.iterations == 12);
  CHECK(cfg.model.k == 3);
  CHECK(cfg.model.disable_hgsa);
  CHECK(cfg.model.background == Vec3(0.1, 0.2, 0.3));
  CHECK(config_to_json(config_from_json(config_to_json(cfg))) == config_to_json(cfg));

  try {
    apply_setting(cfg, "learning_rate", "1");
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    for (const auto& k : config_keys()) CHECK(msg.find(k) != std::string::npos);
  }
  CHECK_THROWS_AS(apply_setting(cfg, "k", "ten"), Error);
  CHECK_THROWS_AS(apply_config_text(cfg, "k 3\n"), Error);
  TrainConfig bad;
  bad.loss.nlpd = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = TrainConfig{};
  bad.iterations = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("scene directories round trip") {
  SynthSpec spec;
  spec.views = 3;
  spec.width = 12;
  spec.height = 10;
  const SynthScene syn = synthesize(spec);
  const auto dir = temp_dir("scene");
  write_scene(dir, syn.scene);
  const Scene back = load_scene(dir);
  REQUIRE(back.views.size() == 3);
  CHECK(back.cloud.points.size() == syn.scene.cloud.points.size());
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back.views[i].camera.width == 12);
    CHECK((back.views[i].camera.rotation - syn.scene.views[i].camera.rotation).norm() < 1e-12);
    // 8-bit storage.
    for (int c = 0; c < 3; ++c)
      CHECK((back.views[i].image.channels[c] - syn.scene.views[i].image.channels[c]).cwiseAbs().maxCoeff() <= 0.5 / 255 + 1e-12);
  }
  std::filesystem::remove(dir / "images" / "view_001.ppm");
  CHECK_THROWS_AS(load_scene(dir), Error);
}
