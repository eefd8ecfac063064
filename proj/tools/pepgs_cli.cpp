// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

// pepgs: synth | train | render | eval | inspect
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pepgs/checkpoint.hpp"
#include "pepgs/config.hpp"
#include "pepgs/scene_io.hpp"
#include "pepgs/synth.hpp"
#include "pepgs/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pepgs;

namespace {

struct UsageError : Error {
  using Error::Error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  SynthSpec spec;
  std::string shapes = "sphere";
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a synthetic blob scene");
  c->add_option("--out", a.out, "Output scene directory")->required();
  c->add_option("--shapes", a.shapes, "Comma-separated shape list (sphere, ellipsoid)");
  c->add_option("--views", a.spec.views, "Number of ring cameras");
  c->add_option("--width", a.spec.width, "Image width");
  c->add_option("--height", a.spec.height, "Image height");
  c->add_option("--seed", a.spec.seed, "Random seed");
  c->add_option("--points-per-blob", a.spec.points_per_blob, "Point samples per blob");
  c->add_option("--ring-radius", a.spec.ring_radius, "Camera ring radius");
  c->add_option("--focal-ratio", a.spec.focal_ratio, "Focal length / image width");
}

int run_synth(SynthArgs& a) {
  a.spec.shapes.clear();
  std::stringstream ss(a.shapes);
  for (std::string s; std::getline(ss, s, ',');)
    if (!s.empty()) a.spec.shapes.push_back(s);
  try {
    a.spec.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const SynthScene s = synthesize(a.spec);
  write_scene(a.out, s.scene);
  std::cout << "wrote " << s.scene.views.size() << " views, " << s.scene.cloud.points.size() << " points to " << a.out
            << "\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string scene, out, config_file;
  bool print_config = false;
  bool quiet = false;
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train a model on a scene directory");
  c->add_option("--scene", a.scene, "Scene directory (points.txt, cameras.json, images/)");
  c->add_option("--out", a.out, "Output directory for checkpoint, log, and manifest");
  c->add_option("--config", a.config_file, "Config file of `key = value` lines");
  c->add_flag("--print-config", a.print_config, "Print the resolved config as JSON and exit");
  c->add_flag("--quiet", a.quiet, "Suppress progress output");
  const json defaults = config_to_json(TrainConfig{});
  for (const auto& key : config_keys()) {
    const json& d = defaults.at(key);
    const std::string flag = "--" + dashed(key);
    if (d.is_boolean()) {
      a.flags[key] = false;
      a.options[key] = c->add_flag(flag, a.flags[key], "Config key " + key + " (default " + d.dump() + ")");
    } else {
      std::string def = d.is_array() ? (d[0].dump() + " " + d[1].dump() + " " + d[2].dump()) : d.dump();
      a.values[key] = def;
      a.options[key] = c->add_option(flag, a.values[key], "Config key " + key)->default_str(def);
    }
  }
}

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig cfg;
  try {
    if (!a.config_file.empty()) apply_config_file(cfg, a.config_file);
    for (const auto& [key, opt] : a.options) {
      if (opt->count() == 0) continue;
      if (a.flags.count(key))
        apply_setting(cfg, key, "true");
      else
        apply_setting(cfg, key, a.values.at(key));
    }
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

int run_train(const TrainArgs& a) {
  const TrainConfig cfg = resolve_config(a);
  if (a.print_config) {
    std::cout << config_to_json(cfg).dump(2) << "\n";
    return 0;
  }
  if (a.scene.empty() || a.out.empty()) throw UsageError("train requires --scene and --out");
  const Scene scene = load_scene(a.scene);
  const ViewSplit split = split_views(static_cast<int>(scene.views.size()));
  std::vector<View> views;
  for (int i : split.train) views.push_back(scene.views[static_cast<size_t>(i)]);

  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<std::string> artifacts = {"checkpoint.pepg", "manifest.json", "train_log.csv"};
  TrainHooks hooks;
  if (cfg.snapshot_every > 0) {
    fs::create_directories(out / "snapshots");
    hooks.snapshot = [&](int iter, const Model& m) {
      char name[64];
      std::snprintf(name, sizeof name, "snapshots/iter_%06d.pepg", iter);
      save_checkpoint(out / name, cfg, m);
      artifacts.push_back(name);
    };
  }
  const int every = std::max(1, cfg.iterations / 20);
  if (!a.quiet)
    hooks.progress = [&](const LogRow& r) {
      if (r.iter % every == 0 || r.iter == cfg.iterations)
        std::cout << "iter " << r.iter << "  loss " << r.loss.total << "\n" << std::flush;
    };

  const TrainResult res = train(scene.cloud, views, cfg, hooks);
  save_checkpoint(out / "checkpoint.pepg", cfg, res.model);
  write_text(out / "train_log.csv", format_log(res.log));

  json manifest;
  manifest["config"] = config_to_json(cfg);
  manifest["scene"] = a.scene;
  manifest["train_views"] = split.train;
  manifest["test_views"] = split.test;
  manifest["iterations_completed"] = res.log.size();
  manifest["aborted"] = res.aborted;
  if (res.aborted) manifest["abort_reason"] = res.abort_reason;
  manifest["anchors"] = res.model.num_anchors();
  std::sort(artifacts.begin(), artifacts.end());
  manifest["artifacts"] = artifacts;
  write_text(out / "manifest.json", manifest.dump(2) + "\n");

  if (res.aborted) {
    std::cerr << "error: training aborted: " << res.abort_reason << " (last good checkpoint saved)\n";
    return 2;
  }
  return 0;
}

// ---- render -----------------------------------------------------------------

struct RenderArgs {
  std::string checkpoint, scene, pose, out;
  int camera = -1;
  int threads = 1;
};

void add_render(CLI::App& app, RenderArgs& a) {
  auto* c = app.add_subcommand("render", "Render a view from a checkpoint to PPM");
  c->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  c->add_option("--scene", a.scene, "Scene directory whose cameras.json is indexed by --camera");
  c->add_option("--camera", a.camera, "Camera index into the scene (-1 = unset)");
  c->add_option("--pose", a.pose, "Camera JSON file (first entry is used)");
  c->add_option("--out", a.out, "Output PPM path")->required();
  c->add_option("--threads", a.threads, "Rasterizer threads");
}

int run_render(const RenderArgs& a) {
  if (a.pose.empty() == (a.camera < 0)) throw UsageError("render requires exactly one of --camera or --pose");
  if (a.threads <= 0) throw UsageError("--threads must be positive");
  Camera cam;
  if (!a.pose.empty()) {
    const auto cams = read_cameras(a.pose);
    if (cams.empty()) throw UsageError("pose file has no cameras");
    cam = cams.front();
  } else {
    if (a.scene.empty()) throw UsageError("--camera requires --scene");
    const auto cams = read_cameras(fs::path(a.scene) / "cameras.json");
    if (a.camera >= static_cast<int>(cams.size()))
      throw UsageError("camera index " + std::to_string(a.camera) + " out of range [0, " +
                       std::to_string(cams.size() - 1) + "]");
    cam = cams[static_cast<size_t>(a.camera)];
  }
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  write_ppm(a.out, render(ck.model, cam, a.threads));
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, scene, json_out, text_out;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out views of a scene");
  c->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
  c->add_option("--scene", a.scene, "Scene directory")->required();
  c->add_option("--json", a.json_out, "Metrics JSON output path (empty = stdout only)");
  c->add_option("--text", a.text_out, "Metrics text table output path (empty = stdout only)");
}

int run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Scene scene = load_scene(a.scene);
  if (scene.views.size() < 2) throw Error("scene has no held-out views");
  const ViewSplit split = split_views(static_cast<int>(scene.views.size()));
  std::vector<View> views;
  for (int i : split.test) views.push_back(scene.views[static_cast<size_t>(i)]);
  const Metrics m = evaluate(ck.model, views, split.test, ck.config.nlpd);
  const std::string table = metrics_table(m);
  const std::string js = metrics_to_json(m).dump(2) + "\n";
  if (!a.json_out.empty()) write_text(a.json_out, js);
  if (!a.text_out.empty()) write_text(a.text_out, table);
  std::cout << table;
  return 0;
}

// ---- inspect ----------------------------------------------------------------

struct InspectArgs {
  std::string checkpoint;
};

void add_inspect(CLI::App& app, InspectArgs& a) {
  auto* c = app.add_subcommand("inspect", "Print checkpoint metadata as JSON");
  c->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();
}

int run_inspect(const InspectArgs& a) {
  Checkpoint ck = load_checkpoint(a.checkpoint);
  json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = config_to_json(ck.config);
  j["anchors"] = ck.model.num_anchors();
  j["parameters"] = ck.model.parameter_count();
  json tensors = json::object();
  ck.model.visit([&](const std::string& name, ParamGroup g, auto& m) {
    tensors[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"group", group_name(g)}};
  });
  j["tensors"] = tensors;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pepgs: anchored neural Gaussian splatting at desk scale"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  SynthArgs synth;
  TrainArgs train_args;
  RenderArgs render_args;
  EvalArgs eval_args;
  InspectArgs inspect;
  add_synth(app, synth);
  add_train(app, train_args);
  add_render(app, render_args);
  add_eval(app, eval_args);
  add_inspect(app, inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand("synth")) return run_synth(synth);
    if (app.got_subcommand("train")) return run_train(train_args);
    if (app.got_subcommand("render")) return run_render(render_args);
    if (app.got_subcommand("eval")) return run_eval(eval_args);
    if (app.got_subcommand("inspect")) return run_inspect(inspect);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
