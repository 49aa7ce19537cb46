// Copyright 2026 The dodloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "run_config.hpp"

#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "dodloc/error.hpp"

namespace dodloc::cli {

namespace pt = boost::property_tree;

namespace {

std::string stages_text(const std::vector<ConvStage>& stages) {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) out += fmt::format("{}{}", i ? "," : "", stages[i].filters);
  return out;
}

std::vector<ConvStage> parse_stages(const std::string& text, int pool) {
  std::vector<ConvStage> stages;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      stages.push_back({std::stoi(item), pool});
    } catch (const std::exception&) {
      throw DataError("config: bad stage list '" + text + "'");
    }
  }
  return stages;
}

pt::ptree to_tree(const RunConfig& c) {
  pt::ptree t;
  const auto put = [&t](const std::string& key, const auto& value) { t.put(key, fmt::format("{}", value)); };
  const auto& s = c.setup;
  const auto& g = s.gen;

  put("run.seed", c.seed);
  put("run.n", c.n);
  put("run.split", c.split);

  put("camera.fx", s.source_camera.fx);
  put("camera.fy", s.source_camera.fy);
  put("camera.cx", s.source_camera.cx);
  put("camera.cy", s.source_camera.cy);
  put("camera.width", s.source_camera.width);
  put("camera.height", s.source_camera.height);

  put("model.half_x", s.model.half_extents.x());
  put("model.half_y", s.model.half_extents.y());
  put("model.half_z", s.model.half_extents.z());

  put("labels.delta_d", s.labels.delta_d);
  put("labels.n_bin", s.labels.n_bin);
  put("labels.sigma", s.labels.sigma);
  put("labels.k", s.labels.k);
  put("labels.mode", to_string(c.mode));

  put("gen.min_count", g.min_count);
  put("gen.max_count", g.max_count);
  put("gen.near_probability", g.near_probability);
  put("gen.near_threshold", g.near_threshold);
  put("gen.near_min_distance", g.near_min_distance);
  put("gen.near_radius", g.near_radius);
  put("gen.near_max_size", g.near_max_size);
  put("gen.far_groups_min", g.far_groups_min);
  put("gen.far_groups_max", g.far_groups_max);
  put("gen.far_min_distance", g.far_min_distance);
  put("gen.far_max_distance", g.far_max_distance);
  put("gen.far_radius", g.far_radius);
  put("gen.far_member_min_distance", g.far_member_min_distance);
  put("gen.min_depth", g.min_depth);
  put("gen.max_tilt_deg", g.max_tilt_deg);
  put("gen.separation_factor", g.separation_factor);
  put("gen.crop_width", g.crop_width);
  put("gen.crop_height", g.crop_height);
  put("gen.crop_bias_weight", g.crop_bias_weight);
  put("gen.balance_cap", g.balance_cap);
  put("gen.over_cap_fraction", g.over_cap_fraction);
  put("gen.high_density", g.high_density ? "true" : "false");
  put("gen.noise_amplitude", s.style.noise_amplitude);
  put("gen.color_jitter", s.style.color_jitter);
  put("gen.val_count", s.val_count);
  put("gen.test_count", s.test_count);

  put("arch.grid", fmt::format("{}x{}", c.arch.grid.cols, c.arch.grid.rows));
  put("arch.tail", to_string(c.arch.tail));
  put("arch.stages", stages_text(c.arch.stages));
  put("arch.pool", c.arch.stages.empty() ? 2 : c.arch.stages.front().pool);

  put("train.batch_size", c.train.batch_size);
  put("train.epochs", c.train.epochs);
  put("train.learning_rate", c.train.learning_rate);
  put("train.lr_decay", c.train.lr_decay);
  put("train.min_delta", c.train.min_delta);
  put("train.patience", c.train.patience);
  put("train.loss_beta", c.loss_beta);
  put("train.loss_near_bins", c.loss_near_bins);

  put("metrics.window_lo", c.window.lo);
  put("metrics.window_hi", c.window.hi);

  put("bias.distance", c.bias_distance);
  put("bias.max_tilt", c.bias_max_tilt);
  put("bias.step", c.bias_step);
  return t;
}

template <typename T>
T get(const pt::ptree& t, const std::string& key, T fallback) {
  const auto node = t.get_optional<std::string>(key);
  if (!node) return fallback;
  std::istringstream in(*node);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) throw DataError(fmt::format("config: bad value '{}' for {}", *node, key));
  return value;
}

bool get_bool(const pt::ptree& t, const std::string& key, bool fallback) {
  const auto node = t.get_optional<std::string>(key);
  if (!node) return fallback;
  if (*node == "true" || *node == "1") return true;
  if (*node == "false" || *node == "0") return false;
  throw DataError(fmt::format("config: bad boolean '{}' for {}", *node, key));
}

RunConfig from_tree(const pt::ptree& t) {
  // Reject keys the writer would not produce; catches typos.
  const pt::ptree known = to_tree(RunConfig{});
  for (const auto& [section, body] : t) {
    for (const auto& [key, value] : body) {
      if (!known.get_child_optional(section + "." + key)) {
        throw DataError(fmt::format("config: unknown key [{}] {}", section, key));
      }
    }
  }

  RunConfig c;
  auto& s = c.setup;
  auto& g = s.gen;
  c.seed = get(t, "run.seed", c.seed);
  c.n = get(t, "run.n", c.n);
  c.split = get(t, "run.split", c.split);

  s.source_camera.fx = get(t, "camera.fx", s.source_camera.fx);
  s.source_camera.fy = get(t, "camera.fy", s.source_camera.fy);
  s.source_camera.cx = get(t, "camera.cx", s.source_camera.cx);
  s.source_camera.cy = get(t, "camera.cy", s.source_camera.cy);
  s.source_camera.width = get(t, "camera.width", s.source_camera.width);
  s.source_camera.height = get(t, "camera.height", s.source_camera.height);

  s.model.half_extents.x() = get(t, "model.half_x", s.model.half_extents.x());
  s.model.half_extents.y() = get(t, "model.half_y", s.model.half_extents.y());
  s.model.half_extents.z() = get(t, "model.half_z", s.model.half_extents.z());

  s.labels.delta_d = get(t, "labels.delta_d", s.labels.delta_d);
  s.labels.n_bin = get(t, "labels.n_bin", s.labels.n_bin);
  s.labels.sigma = get(t, "labels.sigma", s.labels.sigma);
  s.labels.k = get(t, "labels.k", s.labels.k);
  c.mode = parse_smoothing_mode(get<std::string>(t, "labels.mode", std::string(to_string(c.mode))));

  g.min_count = get(t, "gen.min_count", g.min_count);
  g.max_count = get(t, "gen.max_count", g.max_count);
  g.near_probability = get(t, "gen.near_probability", g.near_probability);
  g.near_threshold = get(t, "gen.near_threshold", g.near_threshold);
  g.near_min_distance = get(t, "gen.near_min_distance", g.near_min_distance);
  g.near_radius = get(t, "gen.near_radius", g.near_radius);
  g.near_max_size = get(t, "gen.near_max_size", g.near_max_size);
  g.far_groups_min = get(t, "gen.far_groups_min", g.far_groups_min);
  g.far_groups_max = get(t, "gen.far_groups_max", g.far_groups_max);
  g.far_min_distance = get(t, "gen.far_min_distance", g.far_min_distance);
  g.far_max_distance = get(t, "gen.far_max_distance", g.far_max_distance);
  g.far_radius = get(t, "gen.far_radius", g.far_radius);
  g.far_member_min_distance = get(t, "gen.far_member_min_distance", g.far_member_min_distance);
  g.min_depth = get(t, "gen.min_depth", g.min_depth);
  g.max_tilt_deg = get(t, "gen.max_tilt_deg", g.max_tilt_deg);
  g.separation_factor = get(t, "gen.separation_factor", g.separation_factor);
  g.crop_width = get(t, "gen.crop_width", g.crop_width);
  g.crop_height = get(t, "gen.crop_height", g.crop_height);
  g.crop_bias_weight = get(t, "gen.crop_bias_weight", g.crop_bias_weight);
  g.balance_cap = get(t, "gen.balance_cap", g.balance_cap);
  g.over_cap_fraction = get(t, "gen.over_cap_fraction", g.over_cap_fraction);
  g.high_density = get_bool(t, "gen.high_density", g.high_density);
  s.style.noise_amplitude = get(t, "gen.noise_amplitude", s.style.noise_amplitude);
  s.style.color_jitter = get(t, "gen.color_jitter", s.style.color_jitter);
  s.val_count = get(t, "gen.val_count", s.val_count);
  s.test_count = get(t, "gen.test_count", s.test_count);

  c.arch.grid = parse_grid(get<std::string>(t, "arch.grid", "3x3"));
  c.arch.tail = parse_tail_kind(get<std::string>(t, "arch.tail", std::string(to_string(c.arch.tail))));
  const int pool = get(t, "arch.pool", 2);
  c.arch.stages = parse_stages(get<std::string>(t, "arch.stages", stages_text(c.arch.stages)), pool);

  c.train.batch_size = get(t, "train.batch_size", c.train.batch_size);
  c.train.epochs = get(t, "train.epochs", c.train.epochs);
  c.train.learning_rate = get(t, "train.learning_rate", c.train.learning_rate);
  c.train.lr_decay = get(t, "train.lr_decay", c.train.lr_decay);
  c.train.min_delta = get(t, "train.min_delta", c.train.min_delta);
  c.train.patience = get(t, "train.patience", c.train.patience);
  c.loss_beta = get(t, "train.loss_beta", c.loss_beta);
  c.loss_near_bins = get(t, "train.loss_near_bins", c.loss_near_bins);

  c.window.lo = get(t, "metrics.window_lo", c.window.lo);
  c.window.hi = get(t, "metrics.window_hi", c.window.hi);

  c.bias_distance = get(t, "bias.distance", c.bias_distance);
  c.bias_max_tilt = get(t, "bias.max_tilt", c.bias_max_tilt);
  c.bias_step = get(t, "bias.step", c.bias_step);
  return c;
}

// Values derived from others; applied after every override.
void finalize(RunConfig& c) {
  c.setup.grid = c.arch.grid;
  c.setup.gen.seed = c.seed;
  c.train.seed = c.seed;
  c.arch.n_bin = c.setup.labels.n_bin;
  c.arch.in_width = c.setup.gen.crop_width;
  c.arch.in_height = c.setup.gen.crop_height;
}

}  // namespace

GridSpec parse_grid(const std::string& text) {
  GridSpec grid;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> grid.cols >> x >> grid.rows) || x != 'x' || !(in >> std::ws).eof()) {
    throw DataError("bad grid '" + text + "', expected COLSxROWS");
  }
  grid.validate();
  return grid;
}

void RunConfig::validate() const {
  setup.validate();
  arch.validate();
  train.validate();
  loss_weights().validate();
  if (n < 1) throw DataError("config: n must be >= 1");
  if (split != "train" && split != "val" && split != "test") throw DataError("config: split must be train, val or test");
  if (window.lo < 0 || window.hi < window.lo || window.hi >= setup.labels.n_bin) {
    throw DataError("config: metric window outside the bin range");
  }
  if (!(bias_distance > 0.0) || !(bias_step > 0.0) || bias_max_tilt < 0.0) throw DataError("config: bad bias sweep");
}

LossWeights RunConfig::loss_weights() const {
  return LossWeights::near_emphasis(setup.labels.n_bin, loss_beta, loss_near_bins);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw DataError(fmt::format("config {}: {}", path.string(), e.message()));
  }
  return from_tree(tree);
}

RunConfig resolve(const std::optional<std::filesystem::path>& file, const Overrides& o) {
  RunConfig c = file ? load_run_config(*file) : RunConfig{};
  if (o.high_density || c.setup.gen.high_density) c.setup.gen = c.setup.gen.with_high_density();
  if (o.seed) c.seed = *o.seed;
  if (o.n) c.n = *o.n;
  if (o.grid) c.arch.grid = parse_grid(*o.grid);
  if (o.labels) c.mode = parse_smoothing_mode(*o.labels);
  if (o.tail) c.arch.tail = parse_tail_kind(*o.tail);
  if (o.balance_cap) c.setup.gen.balance_cap = *o.balance_cap;
  finalize(c);
  c.validate();
  return c;
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream out;
  pt::write_ini(out, to_tree(cfg));
  return out.str();
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.ini");
  out << to_ini(cfg);
  if (!out) throw DataError("cannot write " + (dir / "config.ini").string());
}

}  // namespace dodloc::cli
