// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// Train / render / evaluate loops over a multi-view scene.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pepgs/checkpoint.hpp"
#include "pepgs/config.hpp"
#include "pepgs/image.hpp"
#include "pepgs/model.hpp"

namespace pepgs {

struct View {
  Camera camera;
  ImageBuffer image;
};

struct Scene {
  PointCloud cloud;
  std::vector<View> views;
};

/// Reads `points.txt`, `cameras.json`, and `images/<image_file>`; every image
/// must exist and match its camera's dimensions.
Scene load_scene(const std::filesystem::path& dir);

struct ViewSplit {
  std::vector<int> train, test;
};

/// Every 8th view (index 0, 8, 16, ...) is held out for testing. A single-view
/// scene trains and tests on that view.
ViewSplit split_views(int count);

struct LogRow {
  int iter = 0;
  LossBreakdown loss;
};

/// CSV with header `iter,loss,l2,dssim,vol,nlpd`; values printed round-trip exact.
std::string format_log(const std::vector<LogRow>& log);

struct TrainHooks {
  /// Called every `snapshot_every` iterations with the updated model.
  std::function<void(int iter, const Model&)> snapshot;
  /// Called after every iteration (for progress output).
  std::function<void(const LogRow&)> progress;
};

struct TrainResult {
  Model model;
  std::vector<LogRow> log;
  bool aborted = false;      // non-finite loss or gradient; `model` is the last good state
  std::string abort_reason;
};

/// Starts from `init`, visits `views` round-robin.
TrainResult train(Model init, const std::vector<View>& views, const TrainConfig& config, const TrainHooks& hooks = {});

/// Initializes from the point cloud with `config.seed`, then trains.
TrainResult train(const PointCloud& cloud, const std::vector<View>& views, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Loss of the current model on one view, without updating anything.
LossBreakdown view_loss(const Model& model, const View& view, const TrainConfig& config);

ImageBuffer render(const Model& model, const Camera& camera, int threads = 1);

struct ViewMetrics {
  int view = 0;
  Scalar psnr = 0, ssim = 0, nlpd = 0;
};

struct Metrics {
  std::vector<ViewMetrics> views;
  Scalar mean_psnr = 0, mean_ssim = 0, mean_nlpd = 0;
};

/// `ids` label each view in the output (scene view indices).
Metrics evaluate(const Model& model, const std::vector<View>& views, const std::vector<int>& ids,
                 const NlpdParams& nlpd = {});
nlohmann::json metrics_to_json(const Metrics& m);
std::string metrics_table(const Metrics& m);

}  // namespace pepgs
