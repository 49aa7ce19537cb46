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

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dodloc/geometry.hpp"
#include "dodloc/image.hpp"

namespace dodloc {

enum class TailKind {
  one_by_one_conv,  ///< 1x1 convolution, then per-cell average pooling
  fully_connected,  ///< dense layer over the flattened feature map
};

TailKind parse_tail_kind(std::string_view name);
std::string_view to_string(TailKind tail);

/// 3x3 'same' convolution with ReLU, followed by pool x pool max pooling
/// (pool = 1 disables pooling).
struct ConvStage {
  int filters = 16;
  int pool = 2;
  bool operator==(const ConvStage&) const = default;
};

/// Fixed layout of the density regressor: a VGG-like stack, a tail that
/// maps features to n_bin channels per output cell, and a final dense
/// layer whose n_bin x n_bin weights are shared by all cells while every
/// output node keeps its own bias.
struct ArchSpec {
  int in_width = 64;
  int in_height = 64;
  int in_channels = 3;
  std::vector<ConvStage> stages{{16, 2}, {32, 2}, {64, 2}, {64, 2}};
  int n_bin = 50;
  GridSpec grid{3, 3};
  TailKind tail = TailKind::one_by_one_conv;

  void validate() const;
  int feature_width() const;
  int feature_height() const;
  int feature_channels() const;
  int output_size() const { return grid.cell_count() * n_bin; }
  bool operator==(const ArchSpec&) const = default;
};

template <typename T>
struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> data;
};

template <typename T>
struct Parameters {
  std::vector<Tensor<T>> tensors;

  std::size_t count() const;
  void set_zero();
  bool all_finite() const;

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out;
    for (const auto& t : tensors) out.tensors.push_back(Tensor<U>{t.name, t.shape, std::vector<U>(t.data.begin(), t.data.end())});
    return out;
  }
};

/// Maps an RGB image to the network input layout (channel-major planes,
/// values scaled to [-0.5, 0.5]).
template <typename T>
std::vector<T> image_to_input(const Image& image);

template <typename T>
class Regressor {
 public:
  /// Intermediate values of one forward pass, reused by backward().
  struct Cache {
    std::vector<std::vector<T>> cols;         // im2col buffers
    std::vector<std::vector<T>> pre;          // conv outputs before ReLU
    std::vector<std::vector<int>> argmax;     // max-pool winners (flat index into pre)
    std::vector<T> feature;                   // output of the last stage
    std::vector<T> tail_out;                  // 1x1 conv map or dense tail output
    std::vector<T> cell_features;             // cells x n_bin, input of the final layer
    std::vector<T> output;                    // cells x n_bin
  };

  explicit Regressor(ArchSpec arch);

  const ArchSpec& arch() const { return arch_; }
  Parameters<T>& params() { return params_; }
  const Parameters<T>& params() const { return params_; }
  void set_params(Parameters<T> params);
  std::size_t parameter_count() const { return params_.count(); }

  /// Fan-in scaled Gaussian weights, zero biases.
  void initialize(std::uint64_t seed);

  std::vector<T> forward(std::span<const T> input) const;
  const std::vector<T>& forward(std::span<const T> input, Cache& cache) const;

  /// Accumulates scale * d(L^2)/d(params) into grads, where
  /// L = ||(output - target) o weights||. Returns L.
  T backward(const Cache& cache, std::span<const T> target, std::span<const T> weights, T scale,
             Parameters<T>& grads) const;

  /// Zero-valued tensors with this network's shapes.
  Parameters<T> zeros_like() const;

  /// Output cell of every feature-map column / row.
  const std::vector<int>& column_cells() const { return col_cell_; }
  const std::vector<int>& row_cells() const { return row_cell_; }

 private:
  std::size_t tail_index() const { return 2 * arch_.stages.size(); }
  std::size_t out_index() const { return tail_index() + 2; }

  ArchSpec arch_;
  Parameters<T> params_;
  std::vector<int> col_cell_;
  std::vector<int> row_cell_;
  std::vector<int> cell_area_;
};

/// Parameter count of an architecture without allocating it.
std::size_t parameter_count(const ArchSpec& arch);

extern template class Regressor<float>;
extern template class Regressor<double>;

}  // namespace dodloc
