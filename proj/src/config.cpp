// Copyright 2026 The pepgs Authors
// SPDX-License-Identifier: Apache-2.0

#include "pepgs/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pepgs {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Scalar parse_real(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  Scalar x;
  if (!(in >> x) || !(in >> std::ws).eof()) throw Error("invalid value for " + key + ": '" + v + "'");
  return x;
}

long long parse_integer(const std::string& key, const std::string& v) {
  long long x = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, x);
  if (r.ec != std::errc() || r.ptr != end) throw Error("invalid integer for " + key + ": '" + v + "'");
  return x;
}

int parse_int(const std::string& key, const std::string& v) { return static_cast<int>(parse_integer(key, v)); }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error("invalid boolean for " + key + ": '" + v + "'");
}

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<nlohmann::json(const TrainConfig&)> get;
};

#define PEPGS_REAL(name, member) \
  {name, {[](TrainConfig& c, const std::string& v) { c.member = parse_real(name, v); }, [](const TrainConfig& c) { return nlohmann::json(c.member); }}}
#define PEPGS_INT(name, member) \
  {name, {[](TrainConfig& c, const std::string& v) { c.member = parse_int(name, v); }, [](const TrainConfig& c) { return nlohmann::json(c.member); }}}
#define PEPGS_BOOL(name, member) \
  {name, {[](TrainConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, [](const TrainConfig& c) { return nlohmann::json(c.member); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = {
      PEPGS_INT("iterations", iterations),
      {"seed",
       {[](TrainConfig& c, const std::string& v) {
          const long long s = parse_integer("seed", v);
          if (s < 0) throw Error("seed must be non-negative");
          c.seed = static_cast<std::uint64_t>(s);
        },
        [](const TrainConfig& c) { return nlohmann::json(c.seed); }}},
      PEPGS_INT("snapshot_every", snapshot_every),
      PEPGS_INT("threads", threads),
      PEPGS_INT("k", model.k),
      PEPGS_INT("heads", model.heads),
      PEPGS_INT("kan_hidden", model.kan_hidden),
      PEPGS_INT("kan_grid", model.kan_grid),
      PEPGS_INT("kan_order", model.kan_order),
      PEPGS_REAL("tau_alpha", model.tau_alpha),
      PEPGS_REAL("voxel_size", model.voxel_size),
      {"background",
       {[](TrainConfig& c, const std::string& v) {
          std::istringstream in(v);
          Vec3 b;
          if (!(in >> b(0) >> b(1) >> b(2)) || !(in >> std::ws).eof())
            throw Error("invalid value for background: expected three numbers");
          c.model.background = b;
        },
        [](const TrainConfig& c) {
          return nlohmann::json::array({c.model.background(0), c.model.background(1), c.model.background(2)});
        }}},
      PEPGS_REAL("lr_feature", adam.lr_feature),
      PEPGS_REAL("lr_offset", adam.lr_offset),
      PEPGS_REAL("lr_scale", adam.lr_scale),
      PEPGS_REAL("lr_head", adam.lr_head),
      PEPGS_REAL("adam_beta1", adam.beta1),
      PEPGS_REAL("adam_beta2", adam.beta2),
      PEPGS_REAL("adam_eps", adam.eps),
      PEPGS_REAL("lambda_dssim", loss.dssim),
      PEPGS_REAL("lambda_vol", loss.vol),
      PEPGS_REAL("lambda_nlpd", loss.nlpd),
      PEPGS_BOOL("use_l1", loss.use_l1),
      PEPGS_REAL("nlpd_sigma", nlpd.sigma),
      PEPGS_INT("nlpd_scales", nlpd.scales),
      PEPGS_BOOL("disable_nlpd", disable_nlpd),
      PEPGS_BOOL("disable_hgsa", model.disable_hgsa),
      PEPGS_BOOL("disable_kan_cov", model.disable_kan_cov),
      PEPGS_BOOL("disable_kan_op", model.disable_kan_op),
  };
  return f;
}

#undef PEPGS_REAL
#undef PEPGS_INT
#undef PEPGS_BOOL

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 0) throw Error("iterations must be non-negative");
  if (snapshot_every < 0) throw Error("snapshot_every must be non-negative");
  if (threads <= 0) throw Error("threads must be positive");
  if (model.k <= 0) throw Error("k must be positive");
  if (model.heads <= 0 || model.heads > kInputDim) throw Error("heads must be in [1, 36]");
  if (model.kan_hidden <= 0) throw Error("kan_hidden must be positive");
  if (model.kan_grid <= 0) throw Error("kan_grid must be positive");
  if (model.kan_order < 1 || model.kan_order > kMaxSplineOrder) throw Error("kan_order must be in [1, 7]");
  if (!(model.voxel_size > 0)) throw Error("invalid voxel size");
  if (!(adam.lr_feature >= 0 && adam.lr_offset >= 0 && adam.lr_scale >= 0 && adam.lr_head >= 0))
    throw Error("learning rates must be non-negative");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1)) throw Error("adam betas must be in [0, 1)");
  if (!(adam.eps > 0)) throw Error("adam_eps must be positive");
  if (!(nlpd.sigma > 0)) throw Error("nlpd_sigma must be positive");
  if (nlpd.scales < 0) throw Error("nlpd_scales must be non-negative");
  loss.validate();
}

LossWeights TrainConfig::effective_loss() const {
  LossWeights w = loss;
  if (disable_nlpd) w.nlpd = 0;
  return w;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, trim(value));
      return;
    }
  }
  std::string msg = "unknown config key '" + key + "'; valid keys:";
  for (const auto& k : config_keys()) msg += " " + k;
  throw Error(msg);
}

void apply_config_text(TrainConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str());
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, field] : fields()) j[name] = field.get(cfg);
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "background") {
      if (!value.is_array() || value.size() != 3) throw Error("invalid background in config");
      cfg.model.background = Vec3(value[0].get<Scalar>(), value[1].get<Scalar>(), value[2].get<Scalar>());
    } else if (value.is_boolean()) {
      apply_setting(cfg, key, value.get<bool>() ? "true" : "false");
    } else {
      apply_setting(cfg, key, value.dump());
    }
  }
  return cfg;
}

}  // namespace pepgs
