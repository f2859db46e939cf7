// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "sliceout/data.hpp"
#include "sliceout/models.hpp"

namespace sliceout {

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double dampening = 0.0;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// SGD with momentum and Adam over a fixed parameter list. A zero
/// gradient leaves the parameter bits untouched, which is what keeps
/// out-of-slice weights bit-identical across sliced steps.
template <typename T>
class Optimizer {
public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }

  void step(const std::vector<NodePtr<T>>& params) {
    if (state_.empty()) init_state(params);
    if (state_.size() != params.size()) {
      throw shape_error("optimizer: parameter list changed between steps");
    }
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i]->grad.defined()) continue;
      if (config_.kind == OptimizerKind::sgd_momentum) {
        sgd_momentum_step(i, *params[i]);
      } else {
        adam_step(i, *params[i]);
      }
    }
  }

private:
  void init_state(const std::vector<NodePtr<T>>& params) {
    for (const auto& p : params) {
      state_.push_back(Tensor<T>::zeros(p->value.shape()));
      if (config_.kind == OptimizerKind::adam) {
        second_.push_back(Tensor<T>::zeros(p->value.shape()));
      }
    }
  }

  void sgd_momentum_step(std::size_t i, Node<T>& p) {
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* v = state_[i].data();
    const T lr = static_cast<T>(config_.learning_rate);
    const T mu = static_cast<T>(config_.momentum);
    const T damp = static_cast<T>(1.0 - config_.dampening);
    const T wd = static_cast<T>(config_.weight_decay);
    const std::size_t n = p.value.size();
    for (std::size_t j = 0; j < n; ++j) {
      T grad = g[j];
      if (wd != T(0)) grad += wd * w[j];
      v[j] = mu * v[j] + damp * grad;
      w[j] -= lr * v[j];
    }
  }

  void adam_step(std::size_t i, Node<T>& p) {
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = state_[i].data();
    T* v = second_[i].data();
    const T lr = static_cast<T>(config_.learning_rate);
    const T b1 = static_cast<T>(config_.beta1);
    const T b2 = static_cast<T>(config_.beta2);
    const T eps = static_cast<T>(config_.epsilon);
    const T wd = static_cast<T>(config_.weight_decay);
    const T bc1 = static_cast<T>(1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
    const T bc2 = static_cast<T>(1.0 - std::pow(config_.beta2, static_cast<double>(t_)));
    const std::size_t n = p.value.size();
    for (std::size_t j = 0; j < n; ++j) {
      T grad = g[j];
      if (wd != T(0)) grad += wd * w[j];
      m[j] = b1 * m[j] + (T(1) - b1) * grad;
      v[j] = b2 * v[j] + (T(1) - b2) * grad * grad;
      const T mhat = m[j] / bc1;
      const T vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }

  OptimizerConfig config_;
  std::vector<Tensor<T>> state_;   // momentum / first moment
  std::vector<Tensor<T>> second_;  // second moment (adam)
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class Precision { f32, f64 };

struct TrainConfig {
  ModelConfig model;
  SliceScheme scheme;
  OptimizerConfig optimizer;
  std::size_t epochs = 10;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
  double sliceout_cutoff_fraction = 0.0;  // fraction of final epochs run full
  Precision precision = Precision::f64;
};

struct StepMetrics {
  double step_time_ms = 0.0;
  std::uint64_t element_reads = 0;
  std::uint64_t element_writes = 0;
  std::uint64_t copy_bytes = 0;
  std::uint64_t multiply_ops = 0;
  std::uint64_t peak_activation_bytes = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double median_step_time_ms = 0.0;
  std::uint64_t peak_activation_bytes = 0;
  std::uint64_t copy_bytes = 0;
  std::uint64_t multiply_ops = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  std::size_t slice_samples = 0;
};

template <typename T>
struct RunRecord {
  std::vector<EpochMetrics> epochs;
  std::vector<std::vector<SliceSpec>> step_slices;
  std::vector<Tensor<T>> initial_params;
  std::vector<Tensor<T>> final_params;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
};

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

namespace detail {

// Derived, independent rng streams so that an inactive scheme never
// shifts data order or initialization.
inline std::mt19937_64 init_rng(std::uint64_t seed) { return std::mt19937_64(seed); }
inline std::mt19937_64 data_rng(std::uint64_t seed) {
  return std::mt19937_64(seed ^ 0x9e3779b97f4a7c15ull);
}
inline std::mt19937_64 scheme_rng(const TrainConfig& cfg) {
  const std::uint64_t s = cfg.scheme.seed != 0 ? cfg.scheme.seed : cfg.seed;
  return std::mt19937_64(s ^ 0xd1b54a32d192ed03ull);
}

template <typename T>
struct AnyModel {
  std::variant<MlpClassifier<T>, ResidualCnnClassifier<T>, AttentionClassifier<T>> model;

  std::vector<NodePtr<T>> parameters() {
    return std::visit([](auto& m) { return m.parameters(); }, model);
  }
  template <typename Rng>
  std::vector<SliceSpec> sample_step(Rng& rng) {
    return std::visit([&](auto& m) { return m.sample_step(rng); }, model);
  }
  void clear_step() {
    std::visit([](auto& m) { m.clear_step(); }, model);
  }
  NodePtr<T> forward(const NodePtr<T>& x, bool training, std::mt19937_64* rng) {
    return std::visit([&](auto& m) { return m.forward(x, training, rng); }, model);
  }
};

template <typename T>
AnyModel<T> build_model(std::mt19937_64& rng, const ModelConfig& mc, const SliceScheme& scheme) {
  switch (mc.kind) {
    case ModelKind::mlp:
      return AnyModel<T>{make_mlp<T>(rng, mc, scheme)};
    case ModelKind::resblock:
      return AnyModel<T>{make_residual_cnn<T>(rng, mc, scheme)};
    case ModelKind::attention:
      return AnyModel<T>{make_attention_model<T>(rng, mc, scheme)};
  }
  throw config_error("unknown model kind");
}

template <typename T>
std::pair<Tensor<T>, std::vector<int>> assemble_batch(const Dataset<T>& data,
                                                      const std::vector<std::size_t>& order,
                                                      std::size_t first, std::size_t count) {
  Tensor<T> x = Tensor<T>::zeros({count, data.feature_dim}, Alloc::activation);
  std::vector<int> y(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = order[first + i];
    for (std::size_t j = 0; j < data.feature_dim; ++j) x(i, j) = data.train_x(src, j);
    y[i] = data.train_y[src];
  }
  return {std::move(x), std::move(y)};
}

template <typename T>
double evaluate_accuracy(AnyModel<T>& model, const Tensor<T>& xs, const std::vector<int>& ys,
                         std::size_t batch) {
  NoGradGuard guard;
  model.clear_step();
  const std::size_t n = ys.size();
  std::size_t hits = 0;
  for (std::size_t at = 0; at < n; at += batch) {
    const std::size_t count = std::min(batch, n - at);
    Tensor<T> x = Tensor<T>::zeros({count, xs.shape(1)}, Alloc::activation);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < xs.shape(1); ++j) x(i, j) = xs(at + i, j);
    }
    NodePtr<T> logits = model.forward(leaf(std::move(x)), false, nullptr);
    for (std::size_t i = 0; i < count; ++i) {
      if (argmax_row(logits->value, i, logits->value.shape(1)) == ys[at + i]) ++hits;
    }
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

} // namespace detail

/// Full training run: per step resample slices, run the sliced forward and
/// backward passes, and update the touched parameter slices in place.
/// Deterministic for a fixed config and seed (modulo wall-clock timings).
template <typename T>
RunRecord<T> train(const TrainConfig& config, const Dataset<T>& data) {
  if (data.train_y.empty()) throw training_error("train: empty dataset");
  if (config.batch == 0 || config.epochs == 0) throw config_error("train: epochs and batch must be positive");

  auto init = detail::init_rng(config.seed);
  auto shuffler = detail::data_rng(config.seed);
  auto slicer = detail::scheme_rng(config);

  ModelConfig mc = config.model;
  mc.input_dim = data.feature_dim;
  mc.classes = data.classes;
  detail::AnyModel<T> model = detail::build_model<T>(init, mc, config.scheme);
  std::vector<NodePtr<T>> params = model.parameters();
  Optimizer<T> opt(config.optimizer);

  RunRecord<T> record;
  for (const auto& p : params) record.initial_params.push_back(p->value.clone());

  const std::size_t cutoff_epochs = static_cast<std::size_t>(
      std::floor(static_cast<double>(config.epochs) * config.sliceout_cutoff_fraction));
  const std::size_t n_train = data.train_y.size();
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const bool scheme_on = config.scheme.active() && epoch + cutoff_epochs <= config.epochs;
    std::shuffle(order.begin(), order.end(), shuffler);

    std::vector<double> times;
    std::vector<StepMetrics> steps;
    std::size_t slice_samples = 0;
    for (std::size_t at = 0; at + config.batch <= n_train; at += config.batch) {
      auto [x, y] = detail::assemble_batch(data, order, at, config.batch);
      counters().reset_step();
      const auto t0 = std::chrono::steady_clock::now();

      std::vector<SliceSpec> specs;
      if (scheme_on) {
        specs = model.sample_step(slicer);
      } else {
        model.clear_step();
      }
      slice_samples += specs.size();

      NodePtr<T> logits;
      NodePtr<T> loss;
      try {
        logits = model.forward(leaf(std::move(x), false), true, &slicer);
        loss = cross_entropy(logits, y);
      } catch (const numeric_error& e) {
        throw training_error("divergence at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      const double loss_value = static_cast<double>(loss->value(std::size_t{0}));
      if (!std::isfinite(loss_value)) {
        throw training_error("divergence at epoch " + std::to_string(epoch));
      }
      backward(loss);
      opt.step(params);

      const auto t1 = std::chrono::steady_clock::now();
      StepMetrics sm;
      sm.step_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      const auto& c = counters();
      sm.element_reads = c.element_reads;
      sm.element_writes = c.element_writes;
      sm.copy_bytes = c.copy_bytes_allocated;
      sm.multiply_ops = c.multiply_ops;
      sm.peak_activation_bytes = c.peak_activation_bytes;
      sm.loss = loss_value;
      sm.accuracy = batch_accuracy(logits->value, y);
      times.push_back(sm.step_time_ms);
      steps.push_back(sm);
      record.step_slices.push_back(std::move(specs));

      loss.reset();
      logits.reset();
      for (const auto& p : params) p->release_grad();
    }
    if (steps.empty()) throw training_error("train: batch larger than dataset");

    EpochMetrics em;
    em.epoch = epoch;
    em.median_step_time_ms = median(times);
    for (const auto& sm : steps) {
      em.peak_activation_bytes = std::max(em.peak_activation_bytes, sm.peak_activation_bytes);
      em.copy_bytes = std::max(em.copy_bytes, sm.copy_bytes);
      em.multiply_ops = std::max(em.multiply_ops, sm.multiply_ops);
      em.train_loss += sm.loss;
      em.train_acc += sm.accuracy;
    }
    em.train_loss /= static_cast<double>(steps.size());
    em.train_acc /= static_cast<double>(steps.size());
    em.slice_samples = slice_samples;
    em.test_acc = detail::evaluate_accuracy(model, data.test_x, data.test_y, config.batch);
    record.epochs.push_back(em);
  }

  for (const auto& p : params) record.final_params.push_back(p->value.clone());
  record.final_train_acc = record.epochs.back().train_acc;
  record.final_test_acc = record.epochs.back().test_acc;
  return record;
}

// ---------------------------------------------------------------------------
// Benchmarking
// ---------------------------------------------------------------------------

struct BenchRow {
  SchemeKind scheme = SchemeKind::none;
  double median_step_ms = 0.0;
  std::uint64_t peak_activation_bytes = 0;
  std::uint64_t multiply_ops = 0;
  std::uint64_t copy_bytes = 0;
  double rel_time_pct = 0.0;
  double rel_peak_pct = 0.0;
};

struct BenchResult {
  std::size_t width = 0;
  std::size_t batch = 0;
  double rate = 0.0;
  std::size_t trials = 0;
  std::vector<BenchRow> rows;
};

/// Per-scheme median step time and peak transient bytes on the reference
/// three-hidden-layer MLP, normalized to the standard-dropout baseline.
/// Three warmup steps run before timing.
template <typename T>
BenchResult bench_compare(std::size_t width, std::size_t batch, double p,
                          std::vector<SchemeKind> schemes, std::size_t trials,
                          std::uint64_t seed = 1) {
  if (trials < 3) throw usage_error("bench: at least 3 trials required");
  if (p < 0.0 || p >= 1.0) throw rate_error("bench: rate must lie in [0, 1)");
  if (std::round(static_cast<double>(width) * (1.0 - p)) < 1.0) {
    throw rate_error("bench: width " + std::to_string(width) + " too small for rate " +
                     std::to_string(p));
  }
  if (std::find(schemes.begin(), schemes.end(), SchemeKind::standard) == schemes.end()) {
    throw usage_error("bench: the standard-dropout baseline must be among the schemes");
  }

  constexpr std::size_t kWarmup = 3;
  constexpr std::size_t kInputDim = 784;
  constexpr std::size_t kClasses = 10;

  // One fixed random batch; data movement is not part of the measurement.
  auto data_gen = std::mt19937_64(seed ^ 0xabcdef12345ull);
  Tensor<T> base_x = Tensor<T>::zeros({batch, kInputDim});
  fill_uniform(base_x, data_gen, 0.0, 1.0);
  std::vector<int> labels(batch);
  std::uniform_int_distribution<int> label_dist(0, static_cast<int>(kClasses) - 1);
  for (auto& l : labels) l = label_dist(data_gen);

  BenchResult result;
  result.width = width;
  result.batch = batch;
  result.rate = p;
  result.trials = trials;

  for (SchemeKind kind : schemes) {
    SliceScheme scheme;
    scheme.kind = kind;
    scheme.rate = kind == SchemeKind::none ? 0.0 : p;
    ModelConfig mc;
    mc.kind = ModelKind::mlp;
    mc.input_dim = kInputDim;
    mc.classes = kClasses;
    mc.hidden = {width, width, width};

    auto init = detail::init_rng(seed);
    auto slicer = std::mt19937_64(seed ^ 0xd1b54a32d192ed03ull);
    detail::AnyModel<T> model = detail::build_model<T>(init, mc, scheme);
    std::vector<NodePtr<T>> params = model.parameters();
    Optimizer<T> opt(OptimizerConfig{});

    BenchRow row;
    row.scheme = kind;
    std::vector<double> times;
    for (std::size_t step = 0; step < kWarmup + trials; ++step) {
      Tensor<T> x = base_x.clone(Alloc::activation);
      counters().reset_step();
      const auto t0 = std::chrono::steady_clock::now();
      if (scheme.active()) {
        model.sample_step(slicer);
      } else {
        model.clear_step();
      }
      NodePtr<T> logits = model.forward(leaf(std::move(x), false), true, &slicer);
      NodePtr<T> loss = cross_entropy(logits, labels);
      backward(loss);
      opt.step(params);
      const auto t1 = std::chrono::steady_clock::now();
      if (step >= kWarmup) {
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        const auto& c = counters();
        row.peak_activation_bytes = std::max(row.peak_activation_bytes, c.peak_activation_bytes);
        row.multiply_ops = std::max(row.multiply_ops, c.multiply_ops);
        row.copy_bytes = std::max(row.copy_bytes, c.copy_bytes_allocated);
      }
      loss.reset();
      logits.reset();
      for (const auto& pp : params) pp->release_grad();
    }
    row.median_step_ms = median(times);
    result.rows.push_back(row);
  }

  const BenchRow* baseline = nullptr;
  for (const auto& row : result.rows) {
    if (row.scheme == SchemeKind::standard) baseline = &row;
  }
  for (auto& row : result.rows) {
    row.rel_time_pct = 100.0 * row.median_step_ms / baseline->median_step_ms;
    row.rel_peak_pct = 100.0 * static_cast<double>(row.peak_activation_bytes) /
                       static_cast<double>(baseline->peak_activation_bytes);
  }
  return result;
}

} // namespace sliceout
