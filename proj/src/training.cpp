// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/training.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pepgs/losses.hpp"
#include "pepgs/optimizer.hpp"
#include "pepgs/scene_io.hpp"

namespace pepgs {

namespace {

std::string num(Scalar v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

RasterOptions raster_options(int threads) {
  RasterOptions o;
  o.threads = threads;
  return o;
}

}  // namespace

Scene load_scene(const std::filesystem::path& dir) {
  Scene scene;
  scene.cloud = read_point_cloud(dir / "points.txt");
  const auto cameras = read_cameras(dir / "cameras.json");
  if (cameras.empty()) throw Error("scene has no cameras");
  for (const Camera& cam : cameras) {
    if (cam.image_file.empty()) throw Error("camera without image_file");
    const auto path = dir / "images" / cam.image_file;
    if (!std::filesystem::exists(path)) throw Error("missing image " + path.string());
    ImageBuffer img = read_ppm(path);
    if (img.width != cam.width || img.height != cam.height)
      throw Error("image " + cam.image_file + " does not match its camera dimensions");
    scene.views.push_back({cam, std::move(img)});
  }
  return scene;
}

ViewSplit split_views(int count) {
  ViewSplit s;
  if (count == 1) {
    s.train = s.test = {0};
    return s;
  }
  for (int i = 0; i < count; ++i) (i % 8 == 0 ? s.test : s.train).push_back(i);
  return s;
}

std::string format_log(const std::vector<LogRow>& log) {
  std::string out = "iter,loss,l2,dssim,vol,nlpd\n";
  for (const auto& r : log) {
    out += std::to_string(r.iter) + "," + num(r.loss.total) + "," + num(r.loss.recon) + "," + num(r.loss.dssim) + "," +
           num(r.loss.vol) + "," + num(r.loss.nlpd) + "\n";
  }
  return out;
}

LossBreakdown view_loss(const Model& model, const View& view, const TrainConfig& config) {
  const RenderOutput out = render_view(model, view.camera, nullptr, raster_options(config.threads));
  return total_loss(out.image, view.image, out.scales, config.effective_loss(), config.nlpd);
}

TrainResult train(Model init, const std::vector<View>& views, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (views.empty()) throw Error("training needs at least one view");
  for (const auto& v : views)
    if (v.image.width != v.camera.width || v.image.height != v.camera.height)
      throw Error("training image does not match its camera");

  TrainResult result{std::move(init), {}, false, {}};
  Model& model = result.model;
  Adam adam(model, config.adam);
  const LossWeights weights = config.effective_loss();
  const RasterOptions raster = raster_options(config.threads);
  Model grad = model.zeros_like();

  for (int it = 0; it < config.iterations; ++it) {
    const View& view = views[static_cast<size_t>(it) % views.size()];
    ForwardCache cache;
    const RenderOutput out = render_view(model, view.camera, &cache, raster);
    ImageBuffer grad_image;
    RowMat grad_scales;
    const LossBreakdown loss =
        total_loss(out.image, view.image, out.scales, weights, config.nlpd, &grad_image, &grad_scales);
    if (!std::isfinite(loss.total)) {
      result.aborted = true;
      result.abort_reason = "non-finite loss at iteration " + std::to_string(it + 1);
      break;
    }
    grad.visit([](const std::string&, ParamGroup, auto& m) { m.setZero(); });
    backward_view(model, view.camera, cache, grad_image, grad_scales, grad, raster);
    try {
      check_finite(grad);
    } catch (const Error& e) {
      result.aborted = true;
      result.abort_reason = std::string(e.what()) + " at iteration " + std::to_string(it + 1);
      break;
    }
    adam.step(model, grad);
    result.log.push_back({it + 1, loss});
    if (hooks.progress) hooks.progress(result.log.back());
    if (hooks.snapshot && config.snapshot_every > 0 && (it + 1) % config.snapshot_every == 0) hooks.snapshot(it + 1, model);
  }
  return result;
}

TrainResult train(const PointCloud& cloud, const std::vector<View>& views, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  return train(Model::create(cloud, config.model, config.seed), views, config, hooks);
}

ImageBuffer render(const Model& model, const Camera& camera, int threads) {
  return render_view(model, camera, nullptr, raster_options(threads)).image;
}

Metrics evaluate(const Model& model, const std::vector<View>& views, const std::vector<int>& ids,
                 const NlpdParams& nlpd) {
  if (views.empty()) throw Error("evaluation needs at least one view");
  if (ids.size() != views.size()) throw Error("view id count mismatch");
  Metrics m;
  for (size_t i = 0; i < views.size(); ++i) {
    const ImageBuffer img = render(model, views[i].camera);
    ViewMetrics v;
    v.view = ids[i];
    v.psnr = psnr(img, views[i].image);
    v.ssim = ssim(img, views[i].image);
    v.nlpd = nlpd_loss(img, views[i].image, nlpd);
    m.mean_psnr += v.psnr;
    m.mean_ssim += v.ssim;
    m.mean_nlpd += v.nlpd;
    m.views.push_back(v);
  }
  const auto n = static_cast<Scalar>(views.size());
  m.mean_psnr /= n;
  m.mean_ssim /= n;
  m.mean_nlpd /= n;
  return m;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["views"] = nlohmann::json::array();
  for (const auto& v : m.views) j["views"].push_back({{"view", v.view}, {"psnr", v.psnr}, {"ssim", v.ssim}, {"nlpd", v.nlpd}});
  j["mean"] = {{"psnr", m.mean_psnr}, {"ssim", m.mean_ssim}, {"nlpd", m.mean_nlpd}};
  return j;
}

std::string metrics_table(const Metrics& m) {
  std::ostringstream out;
  char line[128];
  out << "view      psnr      ssim      nlpd\n";
  for (const auto& v : m.views) {
    std::snprintf(line, sizeof line, "%4d  %8.3f  %8.5f  %8.5f\n", v.view, v.psnr, v.ssim, v.nlpd);
    out << line;
  }
  std::snprintf(line, sizeof line, "mean  %8.3f  %8.5f  %8.5f\n", m.mean_psnr, m.mean_ssim, m.mean_nlpd);
  out << line;
  return out.str();
}

}  // namespace pepgs
