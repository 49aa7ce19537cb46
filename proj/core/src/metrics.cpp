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

#include "dodloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "dodloc/error.hpp"

namespace dodloc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Sum of |e| over gt mass with the sentinel rule for empty bins.
double normalized(double abs_err, double mass) {
  if (mass > 0.0) return abs_err / mass;
  return abs_err == 0.0 ? 0.0 : kNaN;
}

}  // namespace

ImageErrors per_image_errors(std::span<const double> pred, std::span<const double> gt_raw) {
  if (pred.size() != gt_raw.size() || pred.empty()) throw DataError("metrics: prediction and ground truth differ in shape");
  ImageErrors out;
  out.e.resize(pred.size());
  out.gt.assign(gt_raw.begin(), gt_raw.end());
  double sum_e = 0.0, sum_gt = 0.0;
  for (std::size_t d = 0; d < pred.size(); ++d) {
    out.e[d] = std::max(0.0, pred[d]) - gt_raw[d];
    sum_e += out.e[d];
    sum_gt += gt_raw[d];
  }
  if (!(sum_gt > 0.0)) throw DataError("metrics: image without targets, integral error undefined");
  out.T = std::abs(sum_e) / sum_gt;
  return out;
}

ImageErrors per_image_errors(const LabelGrid& pred, const LabelGrid& gt_raw) {
  if (!(pred.grid() == gt_raw.grid()) || pred.n_bin() != gt_raw.n_bin()) {
    throw DataError("metrics: prediction and ground truth differ in shape");
  }
  // Clamp per cell before summing so negative outputs cannot cancel mass.
  LabelGrid clamped = pred;
  for (double& v : clamped.values()) v = std::max(0.0, v);
  return per_image_errors(clamped.collapsed().values, gt_raw.collapsed().values);
}

MetricsReport aggregate(std::span<const ImageErrors> images, double delta_d, BinWindow window) {
  if (images.empty()) throw DataError("metrics: no images to aggregate");
  const std::size_t n_bin = images.front().e.size();
  if (window.lo < 0 || window.hi < window.lo || window.hi >= static_cast<int>(n_bin)) {
    throw DataError(fmt::format("metrics: window [{}, {}] outside 0..{}", window.lo, window.hi, n_bin - 1));
  }
  std::vector<double> abs_err(n_bin, 0.0);
  MetricsReport r;
  r.delta_d = delta_d;
  r.window = window;
  r.gt_mass.assign(n_bin, 0.0);
  double t_sum = 0.0;
  for (const auto& img : images) {
    if (img.e.size() != n_bin || img.gt.size() != n_bin) throw DataError("metrics: images differ in n_bin");
    for (std::size_t d = 0; d < n_bin; ++d) {
      abs_err[d] += std::abs(img.e[d]);
      r.gt_mass[d] += img.gt[d];
    }
    t_sum += img.T;
  }
  r.n_images = static_cast<std::int64_t>(images.size());
  r.T_bar = t_sum / static_cast<double>(images.size());
  r.e_bar.resize(n_bin);
  for (std::size_t d = 0; d < n_bin; ++d) {
    r.e_bar[d] = normalized(abs_err[d], r.gt_mass[d]);
    if (std::isnan(r.e_bar[d])) continue;
    r.E_bar += r.e_bar[d];
    if (static_cast<int>(d) >= window.lo && static_cast<int>(d) <= window.hi) r.E_bar_prime += r.e_bar[d];
  }
  return r;
}

Evaluation evaluate(std::span<const LabelGrid> preds, std::span<const LabelGrid> gts, double delta_d,
                    BinWindow window) {
  if (preds.size() != gts.size()) throw DataError("metrics: prediction and ground-truth counts differ");
  if (preds.empty()) throw DataError("metrics: no images to evaluate");
  Evaluation ev;
  ev.images.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) ev.images.push_back(per_image_errors(preds[i], gts[i]));
  ev.report = aggregate(ev.images, delta_d, window);

  const int cells = gts.front().grid().cell_count();
  const int n_bin = gts.front().n_bin();
  std::vector<std::vector<double>> abs_err(cells, std::vector<double>(n_bin, 0.0));
  std::vector<std::vector<double>> mass(cells, std::vector<double>(n_bin, 0.0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (int c = 0; c < cells; ++c) {
      const auto p = preds[i].cell(c);
      const auto g = gts[i].cell(c);
      for (int d = 0; d < n_bin; ++d) {
        abs_err[c][d] += std::abs(std::max(0.0, p[d]) - g[d]);
        mass[c][d] += g[d];
      }
    }
  }
  ev.cell_e_bar.assign(cells, std::vector<double>(n_bin));
  for (int c = 0; c < cells; ++c)
    for (int d = 0; d < n_bin; ++d) ev.cell_e_bar[c][d] = normalized(abs_err[c][d], mass[c][d]);
  return ev;
}

void report_export(const MetricsReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "bin_index,bin_lo_m,bin_hi_m,e_bar,gt_mass\n";
  const int n = r.n_bin();
  for (int d = 0; d < n; ++d) {
    const double lo = d * r.delta_d;
    const double hi = d + 1 < n ? (d + 1) * r.delta_d : std::numeric_limits<double>::infinity();
    out << fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g}\n", d, lo, hi, r.e_bar[d], r.gt_mass[d]);
  }
  out << "# summary\n";
  out << fmt::format("T_bar,{:.9g}\n", r.T_bar);
  out << fmt::format("E_bar,{:.9g}\n", r.E_bar);
  out << fmt::format("E_bar_prime,{:.9g}\n", r.E_bar_prime);
  out << fmt::format("n_images,{}\n", r.n_images);
  out << fmt::format("window_lo,{}\n", r.window.lo);
  out << fmt::format("window_hi,{}\n", r.window.hi);
  out << fmt::format("delta_d,{:.9g}\n", r.delta_d);
  out << fmt::format("params,{}\n", r.params);
  if (!out) throw DataError("write failed: " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  return fields;
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(fmt::format("{}: bad number '{}'", path.string(), s));
  }
}

}  // namespace

MetricsReport report_import(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "bin_index,bin_lo_m,bin_hi_m,e_bar,gt_mass") {
    throw DataError(path.string() + ": not a metrics report");
  }
  MetricsReport r;
  bool summary = false;
  bool have_delta = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "# summary") {
      summary = true;
      continue;
    }
    const auto f = split_csv(line);
    if (!summary) {
      if (f.size() != 5) throw DataError(path.string() + ": malformed bin row");
      if (static_cast<std::size_t>(parse_double(f[0], path)) != r.e_bar.size()) {
        throw DataError(path.string() + ": bin rows out of order");
      }
      r.e_bar.push_back(parse_double(f[3], path));
      r.gt_mass.push_back(parse_double(f[4], path));
      continue;
    }
    if (f.size() != 2) throw DataError(path.string() + ": malformed summary row");
    const double v = parse_double(f[1], path);
    if (f[0] == "T_bar") r.T_bar = v;
    else if (f[0] == "E_bar") r.E_bar = v;
    else if (f[0] == "E_bar_prime") r.E_bar_prime = v;
    else if (f[0] == "n_images") r.n_images = static_cast<std::int64_t>(v);
    else if (f[0] == "window_lo") r.window.lo = static_cast<int>(v);
    else if (f[0] == "window_hi") r.window.hi = static_cast<int>(v);
    else if (f[0] == "delta_d") { r.delta_d = v; have_delta = true; }
    else if (f[0] == "params") r.params = static_cast<std::int64_t>(v);
    else throw DataError(fmt::format("{}: unknown summary key '{}'", path.string(), f[0]));
  }
  if (!summary || !have_delta || r.e_bar.empty()) throw DataError(path.string() + ": incomplete report");
  return r;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void write_quartiles_csv(std::span<const ImageErrors> images, const std::filesystem::path& path) {
  if (images.empty()) throw DataError("quartiles: no images");
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "bin_index,q1,median,q3\n";
  const std::size_t n_bin = images.front().e.size();
  std::vector<double> column(images.size());
  for (std::size_t d = 0; d < n_bin; ++d) {
    for (std::size_t i = 0; i < images.size(); ++i) column[i] = images[i].e.at(d);
    out << fmt::format("{},{:.9g},{:.9g},{:.9g}\n", d, quantile(column, 0.25), quantile(column, 0.5),
                       quantile(column, 0.75));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

void write_cell_csv(const Evaluation& eval, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "cell,bin_index,e_bar\n";
  for (std::size_t c = 0; c < eval.cell_e_bar.size(); ++c)
    for (std::size_t d = 0; d < eval.cell_e_bar[c].size(); ++d)
      out << fmt::format("{},{},{:.9g}\n", c, d, eval.cell_e_bar[c][d]);
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace dodloc
