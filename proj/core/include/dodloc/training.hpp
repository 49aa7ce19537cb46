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
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dodloc/labeling.hpp"
#include "dodloc/network.hpp"
#include "dodloc/scenegen.hpp"

namespace dodloc {

/// Non-learnable per-bin weights of the loss, replicated for every cell.
struct LossWeights {
  std::vector<double> per_bin;

  /// w[d] = 1 + beta * max(0, 1 - d / near_bins), d the bin index.
  static LossWeights near_emphasis(int n_bin, double beta = 4.0, double near_bins = 12.0);
  static LossWeights uniform(int n_bin);

  void validate() const;
  /// Meta-vector for a grid of `cells` cells.
  template <typename T>
  std::vector<T> meta(int cells) const {
    std::vector<T> out;
    out.reserve(per_bin.size() * static_cast<std::size_t>(cells));
    for (int c = 0; c < cells; ++c)
      for (const double w : per_bin) out.push_back(static_cast<T>(w));
    return out;
  }
};

/// ||(pred - gt) o w|| over the stacked cells.
double weighted_loss(std::span<const double> pred, std::span<const double> gt, const LossWeights& w);
double weighted_loss(const LabelGrid& pred, const LabelGrid& gt, const LossWeights& w);

struct TrainConfig {
  int batch_size = 32;
  int epochs = 60;
  double learning_rate = 1e-3;
  double lr_decay = 0.8;
  double min_delta = 1e-4;
  int patience = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;

  void validate() const;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const Parameters<T>& p);
};

/// One bias-corrected ADAM update of params with gradient grads.
template <typename T>
void adam_step(Parameters<T>& params, const Parameters<T>& grads, AdamState<T>& state, double lr,
               const TrainConfig& cfg);

/// Plateau rule: with h the validation losses since the last learning-rate
/// change, returns lr * decay when the best of the last `patience` epochs
/// failed to improve on the best before them by at least min_delta.
double lr_schedule_update(std::span<const double> history, double lr, const TrainConfig& cfg);

/// Inputs and stacked targets prepared for one architecture and label mode.
struct TrainingSet {
  std::vector<std::vector<float>> inputs;
  std::vector<std::vector<float>> targets;
  std::size_t size() const { return inputs.size(); }
};

/// Labels are rebuilt from each sample's poses for the architecture's grid.
TrainingSet make_training_set(std::span<const Sample> samples, std::span<const int> indices, const ArchSpec& arch,
                              const LabelSpec& spec, SmoothingMode mode);

/// Mean of per-sample d(L^2)/d(params) over a batch; returns the mean L.
template <typename T>
double batch_gradient(const Regressor<T>& net, std::span<const std::vector<T>> inputs,
                      std::span<const std::vector<T>> targets, std::span<const T> weights, Parameters<T>& grads);

/// Mean L over a set.
double evaluate_loss(const Regressor<float>& net, const TrainingSet& set, const LossWeights& w);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Parameters<float> best;
  int best_epoch = 0;
  double initial_val_loss = 0.0;
  std::vector<EpochRecord> history;
  int lr_reductions = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch ADAM over `epochs` epochs; returns the parameters of the epoch
/// with the lowest validation loss. Throws NumericalError on divergence.
TrainResult train(Regressor<float>& net, const TrainingSet& train_set, const TrainingSet& val_set,
                  const TrainConfig& cfg, const LossWeights& w, const EpochCallback& on_epoch = {});

struct Checkpoint {
  ArchSpec arch;
  LabelSpec labels;
  SmoothingMode mode = SmoothingMode::partial;
  LossWeights weights;
  Parameters<float> params;
  std::vector<EpochRecord> history;
  double initial_val_loss = 0.0;
  int best_epoch = 0;
};

/// Versioned little-endian binary: arch, label spec, loss weights,
/// float32 tensors, training history.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// epoch,train_loss,val_loss,lr
void write_history_csv(std::span<const EpochRecord> history, double initial_val_loss,
                       const std::filesystem::path& path);

}  // namespace dodloc
