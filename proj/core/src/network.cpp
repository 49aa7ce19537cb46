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

#include "dodloc/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>
#include <fmt/format.h>

#include "dodloc/error.hpp"
#include "dodloc/rng.hpp"

namespace dodloc {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
void im2col3x3(const T* x, int channels, int h, int w, T* cols) {
  const int hw = h * w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          T* out = row + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(out, out + w, T(0));
            continue;
          }
          const T* in = plane + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            out[x] = (sx >= 0 && sx < w) ? in[sx] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* cols, int channels, int h, int w, T* x) {
  const int hw = h * w;
  std::fill(x, x + static_cast<std::size_t>(channels) * hw, T(0));
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const T* in = row + static_cast<std::size_t>(y) * w;
          T* out = plane + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < w) out[sx] += in[x];
          }
        }
      }
    }
  }
}

// Plain loop instead of rowwise().sum(): Eigen's vectorized reduction
// peels a head that depends on the buffer's address, which would make the
// summation order vary between allocations.
template <typename T>
void add_row_sums(const ConstMatMap<T>& m, T* out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    T acc(0);
    for (Eigen::Index c = 0; c < m.cols(); ++c) acc += m(r, c);
    out[r] += acc;
  }
}

template <typename T>
void check_finite(std::span<const T> v, const std::string& where) {
  for (const T x : v)
    if (!std::isfinite(x)) throw NumericalError("non-finite values in " + where);
}

struct StageDims {
  int in_c, in_h, in_w, out_c, pool_h, pool_w;
};

std::vector<StageDims> stage_dims(const ArchSpec& a) {
  std::vector<StageDims> dims;
  int c = a.in_channels, h = a.in_height, w = a.in_width;
  for (const auto& s : a.stages) {
    const int ph = h / s.pool;
    const int pw = w / s.pool;
    dims.push_back({c, h, w, s.filters, ph, pw});
    c = s.filters;
    h = ph;
    w = pw;
  }
  return dims;
}

/// Output cell of each feature row/column: the cell holding the centre of
/// the input region it covers.
std::vector<int> axis_cells(int input_extent, int feature_extent, int cells) {
  std::vector<int> out(static_cast<std::size_t>(feature_extent));
  const int cell_extent = std::max(input_extent / cells, 1);
  for (int j = 0; j < feature_extent; ++j) {
    const double centre = (j + 0.5) * input_extent / feature_extent;
    out[j] = std::min(static_cast<int>(std::floor(centre / cell_extent)), cells - 1);
  }
  return out;
}

}  // namespace

TailKind parse_tail_kind(std::string_view name) {
  if (name == "1x1" || name == "one_by_one_conv") return TailKind::one_by_one_conv;
  if (name == "fc" || name == "fully_connected") return TailKind::fully_connected;
  throw DataError("unknown tail '" + std::string(name) + "' (expected 1x1|fc)");
}

std::string_view to_string(TailKind tail) { return tail == TailKind::one_by_one_conv ? "1x1" : "fc"; }

int ArchSpec::feature_width() const {
  int w = in_width;
  for (const auto& s : stages) w /= s.pool;
  return w;
}

int ArchSpec::feature_height() const {
  int h = in_height;
  for (const auto& s : stages) h /= s.pool;
  return h;
}

int ArchSpec::feature_channels() const { return stages.empty() ? in_channels : stages.back().filters; }

void ArchSpec::validate() const {
  if (in_width < 1 || in_height < 1 || in_channels < 1) throw DataError("arch: input dimensions must be positive");
  if (n_bin < 1) throw DataError("arch: n_bin must be >= 1");
  grid.validate();
  for (const auto& s : stages)
    if (s.filters < 1 || s.pool < 1) throw DataError("arch: stage filters and pool must be >= 1");
  if (feature_width() < grid.cols || feature_height() < grid.rows) {
    throw DataError(fmt::format("arch: {}x{} feature map is coarser than the {}x{} output grid", feature_width(),
                                feature_height(), grid.cols, grid.rows));
  }
  if (tail == TailKind::one_by_one_conv) {
    const auto cols = axis_cells(in_width, feature_width(), grid.cols);
    const auto rows = axis_cells(in_height, feature_height(), grid.rows);
    for (int c = 0; c < grid.cols; ++c)
      if (std::find(cols.begin(), cols.end(), c) == cols.end()) throw DataError("arch: output column without features");
    for (int r = 0; r < grid.rows; ++r)
      if (std::find(rows.begin(), rows.end(), r) == rows.end()) throw DataError("arch: output row without features");
  }
}

template <typename T>
std::size_t Parameters<T>::count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.data.size();
  return n;
}

template <typename T>
void Parameters<T>::set_zero() {
  for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), T(0));
}

template <typename T>
bool Parameters<T>::all_finite() const {
  for (const auto& t : tensors)
    for (const T x : t.data)
      if (!std::isfinite(x)) return false;
  return true;
}

template struct Parameters<float>;
template struct Parameters<double>;

template <typename T>
std::vector<T> image_to_input(const Image& image) {
  const std::size_t hw = static_cast<std::size_t>(image.width) * image.height;
  std::vector<T> out(hw * 3);
  for (std::size_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) out[c * hw + i] = static_cast<T>(image.rgb[i * 3 + c]) / T(255) - T(0.5);
  return out;
}

template std::vector<float> image_to_input<float>(const Image&);
template std::vector<double> image_to_input<double>(const Image&);

namespace {

template <typename T>
Parameters<T> make_zero_params(const ArchSpec& a) {
  Parameters<T> p;
  const auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (const int s : shape) n *= static_cast<std::size_t>(s);
    p.tensors.push_back(Tensor<T>{std::move(name), std::move(shape), std::vector<T>(n, T(0))});
  };
  int c = a.in_channels;
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    add(fmt::format("conv{}.weight", i + 1), {a.stages[i].filters, c, 3, 3});
    add(fmt::format("conv{}.bias", i + 1), {a.stages[i].filters});
    c = a.stages[i].filters;
  }
  if (a.tail == TailKind::one_by_one_conv) {
    add("tail.weight", {a.n_bin, c});
    add("tail.bias", {a.n_bin});
  } else {
    add("tail.weight", {a.output_size(), c * a.feature_height() * a.feature_width()});
    add("tail.bias", {a.output_size()});
  }
  add("out.weight", {a.n_bin, a.n_bin});
  add("out.bias", {a.output_size()});
  return p;
}

}  // namespace

std::size_t parameter_count(const ArchSpec& arch) {
  arch.validate();
  std::size_t n = 0;
  int c = arch.in_channels;
  for (const auto& s : arch.stages) {
    n += static_cast<std::size_t>(s.filters) * c * 9 + s.filters;
    c = s.filters;
  }
  if (arch.tail == TailKind::one_by_one_conv) {
    n += static_cast<std::size_t>(arch.n_bin) * c + arch.n_bin;
  } else {
    n += static_cast<std::size_t>(arch.output_size()) * c * arch.feature_height() * arch.feature_width() +
         arch.output_size();
  }
  return n + static_cast<std::size_t>(arch.n_bin) * arch.n_bin + arch.output_size();
}

template <typename T>
Regressor<T>::Regressor(ArchSpec arch) : arch_(std::move(arch)) {
  arch_.validate();
  params_ = make_zero_params<T>(arch_);
  col_cell_ = axis_cells(arch_.in_width, arch_.feature_width(), arch_.grid.cols);
  row_cell_ = axis_cells(arch_.in_height, arch_.feature_height(), arch_.grid.rows);
  cell_area_.assign(static_cast<std::size_t>(arch_.grid.cell_count()), 0);
  for (const int r : row_cell_)
    for (const int c : col_cell_) ++cell_area_[r * arch_.grid.cols + c];
}

template <typename T>
void Regressor<T>::set_params(Parameters<T> params) {
  const auto ref = make_zero_params<T>(arch_);
  if (params.tensors.size() != ref.tensors.size()) throw DataError("parameter tensor count does not match arch");
  for (std::size_t i = 0; i < ref.tensors.size(); ++i) {
    if (params.tensors[i].data.size() != ref.tensors[i].data.size()) {
      throw DataError("parameter tensor " + ref.tensors[i].name + " has the wrong size");
    }
    params.tensors[i].name = ref.tensors[i].name;
    params.tensors[i].shape = ref.tensors[i].shape;
  }
  params_ = std::move(params);
}

template <typename T>
Parameters<T> Regressor<T>::zeros_like() const {
  return make_zero_params<T>(arch_);
}

template <typename T>
void Regressor<T>::initialize(std::uint64_t seed) {
  Rng rng(seed, 0, 0x1417);
  for (std::size_t i = 0; i < params_.tensors.size(); ++i) {
    auto& t = params_.tensors[i];
    if (t.shape.size() == 1) {
      std::fill(t.data.begin(), t.data.end(), T(0));
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < t.shape.size(); ++d) fan_in *= static_cast<std::size_t>(t.shape[d]);
    // ReLU-fed conv stages get the He gain; the linear tail and output layers unit gain.
    const bool relu = i < tail_index();
    const double stddev = std::sqrt((relu ? 2.0 : 1.0) / static_cast<double>(fan_in));
    for (T& w : t.data) w = static_cast<T>(rng.normal(0.0, stddev));
  }
}

template <typename T>
std::vector<T> Regressor<T>::forward(std::span<const T> input) const {
  Cache cache;
  return forward(input, cache);
}

template <typename T>
const std::vector<T>& Regressor<T>::forward(std::span<const T> input, Cache& cache) const {
  const auto expected = static_cast<std::size_t>(arch_.in_channels) * arch_.in_height * arch_.in_width;
  if (input.size() != expected) {
    throw DataError(fmt::format("input has {} values, arch expects {}", input.size(), expected));
  }
  const auto dims = stage_dims(arch_);
  const std::size_t n_stages = dims.size();
  cache.cols.resize(n_stages);
  cache.pre.resize(n_stages);
  cache.argmax.resize(n_stages);

  std::vector<T> current(input.begin(), input.end());
  for (std::size_t s = 0; s < n_stages; ++s) {
    const auto& d = dims[s];
    const int hw = d.in_h * d.in_w;
    const int k = d.in_c * 9;
    auto& cols = cache.cols[s];
    auto& pre = cache.pre[s];
    cols.resize(static_cast<std::size_t>(k) * hw);
    pre.resize(static_cast<std::size_t>(d.out_c) * hw);
    im2col3x3(current.data(), d.in_c, d.in_h, d.in_w, cols.data());

    const auto& w = params_.tensors[2 * s].data;
    const auto& b = params_.tensors[2 * s + 1].data;
    MatMap<T> y(pre.data(), d.out_c, hw);
    y.noalias() = ConstMatMap<T>(w.data(), d.out_c, k) * ConstMatMap<T>(cols.data(), k, hw);
    y.colwise() += ConstVecMap<T>(b.data(), d.out_c);
    // Checked before ReLU, which would map NaN to zero.
    check_finite<T>(pre, fmt::format("conv{} activations", s + 1));

    // ReLU + max pooling, remembering the winning pre-activation index.
    const int pool = arch_.stages[s].pool;
    std::vector<T> next(static_cast<std::size_t>(d.out_c) * d.pool_h * d.pool_w);
    auto& arg = cache.argmax[s];
    arg.resize(next.size());
    for (int c = 0; c < d.out_c; ++c) {
      const std::size_t plane = static_cast<std::size_t>(c) * hw;
      for (int py = 0; py < d.pool_h; ++py) {
        for (int px = 0; px < d.pool_w; ++px) {
          std::size_t best = plane + static_cast<std::size_t>(py * pool) * d.in_w + px * pool;
          T best_v = pre[best];
          for (int dy = 0; dy < pool; ++dy)
            for (int dx = 0; dx < pool; ++dx) {
              const std::size_t idx = plane + static_cast<std::size_t>(py * pool + dy) * d.in_w + px * pool + dx;
              if (pre[idx] > best_v) {
                best_v = pre[idx];
                best = idx;
              }
            }
          const std::size_t o = static_cast<std::size_t>(c) * d.pool_h * d.pool_w + py * d.pool_w + px;
          next[o] = best_v > T(0) ? best_v : T(0);
          arg[o] = static_cast<int>(best);
        }
      }
    }
    current = std::move(next);
  }
  cache.feature = std::move(current);

  const int n_bin = arch_.n_bin;
  const int cells = arch_.grid.cell_count();
  const int fh = arch_.feature_height();
  const int fw = arch_.feature_width();
  const int fc = arch_.feature_channels();
  const auto& tw = params_.tensors[tail_index()].data;
  const auto& tb = params_.tensors[tail_index() + 1].data;
  cache.cell_features.assign(static_cast<std::size_t>(cells) * n_bin, T(0));
  if (arch_.tail == TailKind::one_by_one_conv) {
    const int hw = fh * fw;
    cache.tail_out.resize(static_cast<std::size_t>(n_bin) * hw);
    MatMap<T> y(cache.tail_out.data(), n_bin, hw);
    y.noalias() = ConstMatMap<T>(tw.data(), n_bin, fc) * ConstMatMap<T>(cache.feature.data(), fc, hw);
    y.colwise() += ConstVecMap<T>(tb.data(), n_bin);
    for (int b = 0; b < n_bin; ++b)
      for (int r = 0; r < fh; ++r)
        for (int c = 0; c < fw; ++c) {
          const int cell = row_cell_[r] * arch_.grid.cols + col_cell_[c];
          cache.cell_features[static_cast<std::size_t>(cell) * n_bin + b] +=
              cache.tail_out[static_cast<std::size_t>(b) * hw + r * fw + c];
        }
    for (int cell = 0; cell < cells; ++cell)
      for (int b = 0; b < n_bin; ++b) cache.cell_features[static_cast<std::size_t>(cell) * n_bin + b] /= T(cell_area_[cell]);
  } else {
    const int in = fc * fh * fw;
    const int out = arch_.output_size();
    cache.tail_out.resize(static_cast<std::size_t>(out));
    VecMap<T> z(cache.tail_out.data(), out);
    z.noalias() = ConstMatMap<T>(tw.data(), out, in) * ConstVecMap<T>(cache.feature.data(), in);
    z += ConstVecMap<T>(tb.data(), out);
    cache.cell_features = cache.tail_out;
  }
  check_finite<T>(cache.cell_features, "tail activations");

  // Shared n_bin x n_bin weights per cell: output[cell] = W * features[cell] + bias[cell].
  const auto& ow = params_.tensors[out_index()].data;
  const auto& ob = params_.tensors[out_index() + 1].data;
  cache.output.resize(static_cast<std::size_t>(cells) * n_bin);
  MatMap<T> o(cache.output.data(), cells, n_bin);
  o.noalias() = ConstMatMap<T>(cache.cell_features.data(), cells, n_bin) * ConstMatMap<T>(ow.data(), n_bin, n_bin).transpose();
  o += ConstMatMap<T>(ob.data(), cells, n_bin);
  check_finite<T>(cache.output, "output layer");
  return cache.output;
}

template <typename T>
T Regressor<T>::backward(const Cache& cache, std::span<const T> target, std::span<const T> weights, T scale,
                         Parameters<T>& grads) const {
  const int n_bin = arch_.n_bin;
  const int cells = arch_.grid.cell_count();
  const std::size_t n_out = static_cast<std::size_t>(cells) * n_bin;
  if (target.size() != n_out || weights.size() != n_out || cache.output.size() != n_out) {
    throw DataError("backward: target/weight length does not match the output");
  }

  // d(L^2)/d(output) = 2 w^2 (output - target)
  std::vector<T> d_out(n_out);
  T loss_sq = 0;
  for (std::size_t i = 0; i < n_out; ++i) {
    const T diff = (cache.output[i] - target[i]) * weights[i];
    loss_sq += diff * diff;
    d_out[i] = T(2) * diff * weights[i] * scale;
  }

  const auto& ow = params_.tensors[out_index()].data;
  auto& g_ow = grads.tensors[out_index()].data;
  auto& g_ob = grads.tensors[out_index() + 1].data;
  ConstMatMap<T> dO(d_out.data(), cells, n_bin);
  MatMap<T>(g_ow.data(), n_bin, n_bin).noalias() += dO.transpose() * ConstMatMap<T>(cache.cell_features.data(), cells, n_bin);
  VecMap<T>(g_ob.data(), static_cast<Eigen::Index>(n_out)) += ConstVecMap<T>(d_out.data(), static_cast<Eigen::Index>(n_out));
  std::vector<T> d_cell(n_out);
  MatMap<T>(d_cell.data(), cells, n_bin).noalias() = dO * ConstMatMap<T>(ow.data(), n_bin, n_bin);

  const int fh = arch_.feature_height();
  const int fw = arch_.feature_width();
  const int fc = arch_.feature_channels();
  const auto& tw = params_.tensors[tail_index()].data;
  auto& g_tw = grads.tensors[tail_index()].data;
  auto& g_tb = grads.tensors[tail_index() + 1].data;
  std::vector<T> d_feature(cache.feature.size());
  if (arch_.tail == TailKind::one_by_one_conv) {
    const int hw = fh * fw;
    std::vector<T> d_map(static_cast<std::size_t>(n_bin) * hw);
    for (int b = 0; b < n_bin; ++b)
      for (int r = 0; r < fh; ++r)
        for (int c = 0; c < fw; ++c) {
          const int cell = row_cell_[r] * arch_.grid.cols + col_cell_[c];
          d_map[static_cast<std::size_t>(b) * hw + r * fw + c] =
              d_cell[static_cast<std::size_t>(cell) * n_bin + b] / T(cell_area_[cell]);
        }
    ConstMatMap<T> dM(d_map.data(), n_bin, hw);
    ConstMatMap<T> F(cache.feature.data(), fc, hw);
    MatMap<T>(g_tw.data(), n_bin, fc).noalias() += dM * F.transpose();
    add_row_sums<T>(dM, g_tb.data());
    MatMap<T>(d_feature.data(), fc, hw).noalias() = ConstMatMap<T>(tw.data(), n_bin, fc).transpose() * dM;
  } else {
    const int in = fc * fh * fw;
    const auto out = static_cast<Eigen::Index>(n_out);
    ConstVecMap<T> dz(d_cell.data(), out);
    MatMap<T>(g_tw.data(), out, in).noalias() += dz * ConstVecMap<T>(cache.feature.data(), in).transpose();
    VecMap<T>(g_tb.data(), out) += dz;
    VecMap<T>(d_feature.data(), in).noalias() = ConstMatMap<T>(tw.data(), out, in).transpose() * dz;
  }
  check_finite<T>(d_feature, "tail gradient");

  const auto dims = stage_dims(arch_);
  std::vector<T> d_next = std::move(d_feature);
  for (std::size_t si = dims.size(); si-- > 0;) {
    const auto& d = dims[si];
    const int hw = d.in_h * d.in_w;
    const int k = d.in_c * 9;
    const auto& pre = cache.pre[si];
    const auto& arg = cache.argmax[si];
    // Route through max pooling and ReLU.
    std::vector<T> d_pre(static_cast<std::size_t>(d.out_c) * hw, T(0));
    for (std::size_t o = 0; o < arg.size(); ++o) {
      const auto idx = static_cast<std::size_t>(arg[o]);
      if (pre[idx] > T(0)) d_pre[idx] += d_next[o];
    }
    ConstMatMap<T> dY(d_pre.data(), d.out_c, hw);
    MatMap<T>(grads.tensors[2 * si].data.data(), d.out_c, k).noalias() +=
        dY * ConstMatMap<T>(cache.cols[si].data(), k, hw).transpose();
    add_row_sums<T>(dY, grads.tensors[2 * si + 1].data.data());
    if (si == 0) break;
    std::vector<T> d_cols(static_cast<std::size_t>(k) * hw);
    MatMap<T>(d_cols.data(), k, hw).noalias() =
        ConstMatMap<T>(params_.tensors[2 * si].data.data(), d.out_c, k).transpose() * dY;
    d_next.assign(static_cast<std::size_t>(d.in_c) * hw, T(0));
    col2im3x3(d_cols.data(), d.in_c, d.in_h, d.in_w, d_next.data());
    check_finite<T>(d_next, fmt::format("conv{} gradient", si + 1));
  }
  return std::sqrt(loss_sq);
}

template class Regressor<float>;
template class Regressor<double>;

}  // namespace dodloc
