// Copyright 2026 The crabsurvey Authors
// SPDX-License-Identifier: Apache-2.0

#include "crabsurvey/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "crabsurvey/errors.hpp"

namespace crabsurvey {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
  return out;
}

}  // namespace

Config Config::defaults() {
  Config c;
  c.values_ = {
      {"seed", "0"},
      // Tiling.
      {"tile.window", "640"},
      {"tile.stride", "320"},
      {"tile.edge_policy", "drop_partial"},
      // Degradation.
      {"degrade.factor", "4"},
      // Super-resolution model and training.
      {"sr.arch", "RDN"},
      {"sr.magnification", "4"},
      {"sr.preset", "desk"},
      {"sr.zero_init_output", "false"},
      {"sr.epochs", "200"},
      {"sr.batch", "16"},
      {"sr.lr", "0.0001"},
      {"sr.lr_decay_every", "100"},
      {"sr.patch", "40"},
      {"sr.patches_per_pair", "1"},
      // Detector structure and decoding.
      {"det.preset", "standard"},
      {"det.four_heads", "true"},
      {"det.gsconv", "true"},
      {"det.eca", "true"},
      {"det.eca_spatial", "false"},
      {"det.dense_fusion", "false"},
      {"det.gsconv_shuffle", "true"},
      {"det.width", "0.5"},
      {"det.depth", "0.33"},
      {"det.max_channels", "1024"},
      {"det.reg_max", "16"},
      {"det.input_side", "640"},
      {"det.conf", "0.25"},
      {"det.nms_iou", "0.45"},
      // Detector training.
      {"det.epochs", "100"},
      {"det.batch", "8"},
      {"det.lr", "0.001"},
      {"det.lr_decay_every", "1000"},
      {"loss.box", "7.5"},
      {"loss.cls", "0.5"},
      {"loss.dfl", "1.5"},
      {"assigner.top_k", "10"},
      {"assigner.alpha", "0.5"},
      {"assigner.beta", "6"},
      // Evaluation, merging and density.
      {"eval.iou", "0.5"},
      {"merge.iou", "0.5"},
      {"sweep.lr_factor", "4"},
      {"density.cell", "320"},
      {"density.altitude_m", "5"},
      {"density.fov_deg", "94"},
      {"density.px_per_cell", "8"},
      // Synthetic scenes.
      {"synth.count", "8"},
      {"synth.side", "640"},
      {"synth.min_crabs", "3"},
      {"synth.max_crabs", "8"},
      {"synth.min_radius", "0.03"},
      {"synth.max_radius", "0.06"},
      {"synth.texture", "0.06"},
      {"synth.pebbles", "30"},
  };
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("config file not found: " + path.string());
  Config c = defaults();
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  if (value.empty()) throw ConfigError("empty value for config key: " + key);
  it->second = value;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

int Config::get_int(const std::string& key) const { return parse_number<int>(key, get(key)); }
double Config::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key));
}
std::uint64_t Config::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

std::string Config::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

TileGrid Config::tile_grid() const {
  TileGrid g;
  g.window = get_int("tile.window");
  g.stride = get_int("tile.stride");
  const std::string& policy = get("tile.edge_policy");
  if (policy == "drop_partial") {
    g.edge_policy = EdgePolicy::kDropPartial;
  } else if (policy == "pad_reflect") {
    g.edge_policy = EdgePolicy::kPadReflect;
  } else {
    throw ConfigError("tile.edge_policy must be drop_partial or pad_reflect");
  }
  if (g.window <= 0 || g.stride <= 0) throw ConfigError("tile window and stride must be positive");
  return g;
}

srr::SRModelConfig Config::sr_model() const {
  const auto arch = srr::parse_architecture(get("sr.arch"));
  const int m = get_int("sr.magnification");
  const std::string& preset = get("sr.preset");
  srr::SRModelConfig cfg;
  if (preset == "desk") {
    cfg = srr::SRModelConfig::desk(arch, m);
  } else if (preset == "full") {
    cfg = srr::SRModelConfig::full(arch, m);
  } else {
    throw ConfigError("sr.preset must be desk or full");
  }
  cfg.zero_init_output = get_bool("sr.zero_init_output");
  cfg.seed = get_u64("seed");
  cfg.validate();
  return cfg;
}

srr::SRTrainConfig Config::sr_train() const {
  srr::SRTrainConfig t;
  t.max_epochs = get_int("sr.epochs");
  t.batch_size = get_int("sr.batch");
  t.learning_rate = get_double("sr.lr");
  t.lr_decay_every = get_int("sr.lr_decay_every");
  t.patch_size = get_int("sr.patch");
  t.patches_per_pair = get_int("sr.patches_per_pair");
  t.seed = get_u64("seed");
  t.validate();
  return t;
}

det::DetectorConfig Config::detector() const {
  const std::string& preset = get("det.preset");
  det::DetectorConfig cfg;
  if (preset == "tiny") {
    cfg = det::DetectorConfig::tiny();
  } else if (preset == "standard") {
    cfg.width_multiplier = get_double("det.width");
    cfg.depth_multiplier = get_double("det.depth");
    cfg.reg_max = get_int("det.reg_max");
  } else {
    throw ConfigError("det.preset must be standard or tiny");
  }
  cfg.four_heads = get_bool("det.four_heads");
  cfg.gsconv = get_bool("det.gsconv");
  cfg.eca = get_bool("det.eca");
  cfg.eca_spatial = get_bool("det.eca_spatial");
  cfg.dense_fusion = get_bool("det.dense_fusion");
  cfg.gsconv_shuffle = get_bool("det.gsconv_shuffle");
  cfg.max_channels = get_int("det.max_channels");
  cfg.input_side = get_int("det.input_side");
  cfg.conf_threshold = static_cast<float>(get_double("det.conf"));
  cfg.nms_iou = static_cast<float>(get_double("det.nms_iou"));
  cfg.seed = get_u64("seed");
  cfg.validate();
  return cfg;
}

det::DetTrainConfig Config::det_train() const {
  det::DetTrainConfig t;
  t.epochs = get_int("det.epochs");
  t.batch_size = get_int("det.batch");
  t.learning_rate = get_double("det.lr");
  t.lr_decay_every = get_int("det.lr_decay_every");
  t.weights.box = static_cast<float>(get_double("loss.box"));
  t.weights.cls = static_cast<float>(get_double("loss.cls"));
  t.weights.dfl = static_cast<float>(get_double("loss.dfl"));
  t.assigner.top_k = get_int("assigner.top_k");
  t.assigner.alpha = get_double("assigner.alpha");
  t.assigner.beta = get_double("assigner.beta");
  if (t.epochs < 0 || t.batch_size <= 0 || t.learning_rate < 0 || t.lr_decay_every <= 0 ||
      t.assigner.top_k <= 0) {
    throw ConfigError("invalid detector training settings");
  }
  return t;
}

SceneSpec Config::scene() const {
  SceneSpec s;
  s.width = s.height = get_int("synth.side");
  s.min_crabs = get_int("synth.min_crabs");
  s.max_crabs = get_int("synth.max_crabs");
  s.min_radius = get_double("synth.min_radius");
  s.max_radius = get_double("synth.max_radius");
  s.texture = get_double("synth.texture");
  s.pebbles = get_int("synth.pebbles");
  if (s.width <= 0 || s.min_crabs < 0 || s.max_crabs < s.min_crabs || !(s.min_radius > 0) ||
      s.max_radius < s.min_radius || s.pebbles < 0) {
    throw ConfigError("invalid synthetic scene settings");
  }
  return s;
}

}  // namespace crabsurvey
