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

#include "dodloc/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "dodloc/error.hpp"
#include "dodloc/rng.hpp"

namespace dodloc {

LossWeights LossWeights::near_emphasis(int n_bin, double beta, double near_bins) {
  LossWeights w;
  w.per_bin.resize(static_cast<std::size_t>(n_bin));
  for (int d = 0; d < n_bin; ++d) w.per_bin[d] = 1.0 + beta * std::max(0.0, 1.0 - d / near_bins);
  return w;
}

LossWeights LossWeights::uniform(int n_bin) {
  LossWeights w;
  w.per_bin.assign(static_cast<std::size_t>(n_bin), 1.0);
  return w;
}

void LossWeights::validate() const {
  if (per_bin.empty()) throw DataError("loss weights: empty");
  for (const double w : per_bin)
    if (!(w > 0.0) || !std::isfinite(w)) throw DataError("loss weights: every weight must be positive");
}

double weighted_loss(std::span<const double> pred, std::span<const double> gt, const LossWeights& w) {
  w.validate();
  const std::size_t n_bin = w.per_bin.size();
  if (pred.size() != gt.size() || pred.size() % n_bin != 0) throw DataError("loss: shape mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = (pred[i] - gt[i]) * w.per_bin[i % n_bin];
    sq += d * d;
  }
  return std::sqrt(sq);
}

double weighted_loss(const LabelGrid& pred, const LabelGrid& gt, const LossWeights& w) {
  if (!(pred.grid() == gt.grid()) || pred.n_bin() != gt.n_bin() || pred.n_bin() != static_cast<int>(w.per_bin.size())) {
    throw DataError("loss: shape mismatch");
  }
  return weighted_loss(pred.values(), gt.values(), w);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw DataError("train: batch size must be >= 1");
  if (epochs < 1) throw DataError("train: epochs must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw DataError("train: lr decay must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw DataError("train: learning rate must be positive");
  if (patience < 1) throw DataError("train: patience must be >= 1");
}

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const Parameters<T>& p) {
  AdamState<T> s;
  for (const auto& t : p.tensors) {
    s.m.emplace_back(t.data.size(), T(0));
    s.v.emplace_back(t.data.size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(Parameters<T>& params, const Parameters<T>& grads, AdamState<T>& state, double lr,
               const TrainConfig& cfg) {
  if (state.m.size() != params.tensors.size() || grads.tensors.size() != params.tensors.size()) {
    throw DataError("adam: state does not match parameters");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& p = params.tensors[i].data;
    const auto& g = grads.tensors[i].data;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (g.size() != p.size() || m.size() != p.size()) throw DataError("adam: tensor size mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(Parameters<float>&, const Parameters<float>&, AdamState<float>&, double,
                               const TrainConfig&);
template void adam_step<double>(Parameters<double>&, const Parameters<double>&, AdamState<double>&, double,
                                const TrainConfig&);

double lr_schedule_update(std::span<const double> history, double lr, const TrainConfig& cfg) {
  const auto n = history.size();
  const auto window = static_cast<std::size_t>(cfg.patience);
  if (n <= window) return lr;
  const double best_before = *std::min_element(history.begin(), history.end() - window);
  const double recent = *std::min_element(history.end() - window, history.end());
  // An improvement of exactly min_delta counts; allow for rounding in the subtraction.
  const double slack = 1e-12 * std::max(1.0, std::abs(best_before));
  if (best_before - recent >= cfg.min_delta - slack) return lr;
  return lr * cfg.lr_decay;
}

TrainingSet make_training_set(std::span<const Sample> samples, std::span<const int> indices, const ArchSpec& arch,
                              const LabelSpec& spec, SmoothingMode mode) {
  if (spec.n_bin != arch.n_bin) throw DataError("training set: label n_bin does not match the architecture");
  TrainingSet set;
  set.inputs.reserve(indices.size());
  set.targets.reserve(indices.size());
  for (const int i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= samples.size()) throw DataError("training set: index out of range");
    const Sample& s = samples[i];
    if (s.image.width != arch.in_width || s.image.height != arch.in_height) {
      throw DataError(fmt::format("training set: sample {} is {}x{}, arch expects {}x{}", i, s.image.width,
                                  s.image.height, arch.in_width, arch.in_height));
    }
    set.inputs.push_back(image_to_input<float>(s.image));
    const LabelGrid labels = make_labels(s.scene, s.camera, arch.grid, spec, mode);
    set.targets.emplace_back(labels.values().begin(), labels.values().end());
  }
  return set;
}

template <typename T>
double batch_gradient(const Regressor<T>& net, std::span<const std::vector<T>> inputs,
                      std::span<const std::vector<T>> targets, std::span<const T> weights, Parameters<T>& grads) {
  if (inputs.empty() || inputs.size() != targets.size()) throw DataError("batch: empty or mismatched batch");
  grads.set_zero();
  typename Regressor<T>::Cache cache;
  const T scale = T(1) / static_cast<T>(inputs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    net.forward(inputs[i], cache);
    total += net.backward(cache, targets[i], weights, scale, grads);
  }
  return total / static_cast<double>(inputs.size());
}

template double batch_gradient<float>(const Regressor<float>&, std::span<const std::vector<float>>,
                                      std::span<const std::vector<float>>, std::span<const float>, Parameters<float>&);
template double batch_gradient<double>(const Regressor<double>&, std::span<const std::vector<double>>,
                                       std::span<const std::vector<double>>, std::span<const double>,
                                       Parameters<double>&);

double evaluate_loss(const Regressor<float>& net, const TrainingSet& set, const LossWeights& w) {
  if (set.size() == 0) throw DataError("evaluate: empty set");
  typename Regressor<float>::Cache cache;
  double total = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& out = net.forward(set.inputs[i], cache);
    const std::vector<double> pred(out.begin(), out.end());
    const std::vector<double> gt(set.targets[i].begin(), set.targets[i].end());
    total += weighted_loss(pred, gt, w);
  }
  return total / static_cast<double>(set.size());
}

TrainResult train(Regressor<float>& net, const TrainingSet& train_set, const TrainingSet& val_set,
                  const TrainConfig& cfg, const LossWeights& w, const EpochCallback& on_epoch) {
  cfg.validate();
  w.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw DataError("train: empty train or validation split");
  if (static_cast<int>(w.per_bin.size()) != net.arch().n_bin) throw DataError("train: loss weights do not match n_bin");

  const std::vector<float> weights = w.meta<float>(net.arch().grid.cell_count());
  Parameters<float> grads = net.zeros_like();
  AdamState<float> adam = AdamState<float>::zeros_like(net.params());
  Rng rng(cfg.seed, 0, 0x5407f1e);

  TrainResult result;
  result.initial_val_loss = evaluate_loss(net, val_set, w);
  result.best = net.params();
  std::vector<double> val_history{result.initial_val_loss};
  std::size_t segment_start = 0;
  double best_val = std::numeric_limits<double>::infinity();
  double lr = cfg.learning_rate;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  typename Regressor<float>::Cache cache;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      grads.set_zero();
      const float scale = 1.0f / static_cast<float>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        net.forward(train_set.inputs[i], cache);
        loss_sum += net.backward(cache, train_set.targets[i], weights, scale, grads);
      }
      if (!std::isfinite(loss_sum) || !grads.all_finite()) {
        throw NumericalError(fmt::format("training diverged in epoch {} (non-finite loss or gradient)", epoch));
      }
      adam_step(net.params(), grads, adam, lr, cfg);
    }
    const double val = evaluate_loss(net, val_set, w);
    if (!std::isfinite(val)) throw NumericalError(fmt::format("validation loss diverged in epoch {}", epoch));

    const EpochRecord rec{epoch, loss_sum / static_cast<double>(train_set.size()), val, lr};
    result.history.push_back(rec);
    if (val < best_val) {
      best_val = val;
      result.best = net.params();
      result.best_epoch = epoch;
    }
    val_history.push_back(val);
    const double next_lr =
        lr_schedule_update(std::span<const double>(val_history).subspan(segment_start), lr, cfg);
    if (next_lr != lr) {
      lr = next_lr;
      ++result.lr_reductions;
      segment_start = val_history.size() - 1;
    }
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

// --- checkpoint ------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'O', 'D', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint32_t count(std::uint32_t limit, const char* what) {
    const auto n = u32();
    if (n > limit) throw DataError(std::string("checkpoint: implausible ") + what + " count");
    return n;
  }

 private:
  unsigned char byte() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) throw DataError("checkpoint: truncated file");
    return static_cast<unsigned char>(c);
  }
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);

  const ArchSpec& a = ckpt.arch;
  w.i32(a.in_width);
  w.i32(a.in_height);
  w.i32(a.in_channels);
  w.u32(static_cast<std::uint32_t>(a.stages.size()));
  for (const auto& s : a.stages) {
    w.i32(s.filters);
    w.i32(s.pool);
  }
  w.i32(a.n_bin);
  w.i32(a.grid.cols);
  w.i32(a.grid.rows);
  w.i32(static_cast<std::int32_t>(a.tail));

  w.f64(ckpt.labels.delta_d);
  w.i32(ckpt.labels.n_bin);
  w.f64(ckpt.labels.sigma);
  w.i32(ckpt.labels.k);
  w.i32(static_cast<std::int32_t>(ckpt.mode));

  w.u32(static_cast<std::uint32_t>(ckpt.weights.per_bin.size()));
  for (const double v : ckpt.weights.per_bin) w.f64(v);

  w.u32(static_cast<std::uint32_t>(ckpt.params.tensors.size()));
  for (const auto& t : ckpt.params.tensors) {
    w.u32(static_cast<std::uint32_t>(t.data.size()));
    for (const float v : t.data) w.f32(v);
  }

  w.f64(ckpt.initial_val_loss);
  w.i32(ckpt.best_epoch);
  w.u32(static_cast<std::uint32_t>(ckpt.history.size()));
  for (const auto& r : ckpt.history) {
    w.i32(r.epoch);
    w.f64(r.train_loss);
    w.f64(r.val_loss);
    w.f64(r.lr);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw DataError("not a dodloc checkpoint: " + path.string());
  }
  Reader r(in);
  if (r.u32() != kCheckpointVersion) throw DataError("unsupported checkpoint version");

  Checkpoint ckpt;
  ArchSpec& a = ckpt.arch;
  a.in_width = r.i32();
  a.in_height = r.i32();
  a.in_channels = r.i32();
  a.stages.resize(r.count(64, "stage"));
  for (auto& s : a.stages) {
    s.filters = r.i32();
    s.pool = r.i32();
  }
  a.n_bin = r.i32();
  a.grid.cols = r.i32();
  a.grid.rows = r.i32();
  const auto tail = r.i32();
  if (tail != 0 && tail != 1) throw DataError("checkpoint: unknown tail kind");
  a.tail = static_cast<TailKind>(tail);
  a.validate();

  ckpt.labels.delta_d = r.f64();
  ckpt.labels.n_bin = r.i32();
  ckpt.labels.sigma = r.f64();
  ckpt.labels.k = r.i32();
  const auto mode = r.i32();
  if (mode < 0 || mode > 2) throw DataError("checkpoint: unknown label mode");
  ckpt.mode = static_cast<SmoothingMode>(mode);
  ckpt.labels.validate();

  ckpt.weights.per_bin.resize(r.count(1u << 20, "loss weight"));
  for (double& v : ckpt.weights.per_bin) v = r.f64();

  ckpt.params.tensors.resize(r.count(1024, "tensor"));
  for (auto& t : ckpt.params.tensors) {
    t.data.resize(r.count(1u << 30, "tensor element"));
    for (float& v : t.data) v = r.f32();
  }
  // Restores names and shapes, and checks sizes against the arch.
  Regressor<float> probe(a);
  probe.set_params(std::move(ckpt.params));
  ckpt.params = probe.params();

  ckpt.initial_val_loss = r.f64();
  ckpt.best_epoch = r.i32();
  ckpt.history.resize(r.count(1u << 20, "epoch"));
  for (auto& e : ckpt.history) {
    e.epoch = r.i32();
    e.train_loss = r.f64();
    e.val_loss = r.f64();
    e.lr = r.f64();
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint: trailing bytes");
  return ckpt;
}

void write_history_csv(std::span<const EpochRecord> history, double initial_val_loss,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "epoch,train_loss,val_loss,lr\n";
  out << fmt::format("0,,{:.9g},\n", initial_val_loss);
  for (const auto& r : history) out << fmt::format("{},{:.9g},{:.9g},{:.9g}\n", r.epoch, r.train_loss, r.val_loss, r.lr);
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace dodloc
