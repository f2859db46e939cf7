// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "sliceout/nn.hpp"

namespace sliceout {

enum class ModelKind { mlp, resblock, attention };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::mlp: return "mlp";
    case ModelKind::resblock: return "resblock";
    case ModelKind::attention: return "attention";
  }
  return "?";
}

struct ModelConfig {
  ModelKind kind = ModelKind::mlp;
  std::size_t input_dim = 64;
  std::size_t classes = 10;
  // mlp
  std::vector<std::size_t> hidden = {256, 256, 256};
  // resblock (input reshaped to [N, 1, image, image])
  std::size_t channels = 8;
  std::size_t expanded = 16;
  BlockPlacement placement = BlockPlacement::first_conv;
  // attention (input reshaped to [seq_len, model_dim] per sample)
  std::size_t seq_len = 8;
  std::size_t model_dim = 8;
  std::size_t heads = 2;
  std::size_t ff_dim = 16;
};

inline int argmax_row(const auto& logits, std::size_t row, std::size_t classes) {
  int best = 0;
  auto best_v = logits(row, std::size_t{0});
  for (std::size_t j = 1; j < classes; ++j) {
    if (logits(row, j) > best_v) {
      best_v = logits(row, j);
      best = static_cast<int>(j);
    }
  }
  return best;
}

template <typename T>
double batch_accuracy(const Tensor<T>& logits, const std::vector<int>& labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.shape(0); ++i) {
    if (argmax_row(logits, i, logits.shape(1)) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// MLP classifier
// ---------------------------------------------------------------------------

/// Fully connected classifier. Under SliceOut every hidden layer's output
/// axis is sliced; the following layer consumes the same slice on its
/// input axis, and the head slices only its input. Standard dropout masks
/// the post-relu activations; controlled dropout gathers the kept
/// row/column grids into fresh memory each step.
template <typename T>
struct MlpClassifier {
  ModelConfig dims;
  SliceScheme scheme;
  std::vector<DenseSliceLayer<T>> hidden;
  DenseSliceLayer<T> head;
  std::vector<std::size_t> kept_widths;  // per hidden layer

  std::vector<SliceSpec> step_specs;                  // sliceout, per hidden layer
  std::vector<std::vector<std::size_t>> keep_sets;    // controlled, per hidden layer

  std::vector<NodePtr<T>> parameters() const {
    std::vector<NodePtr<T>> ps;
    for (const auto& l : hidden) {
      for (const auto& p : l.parameters()) ps.push_back(p);
    }
    for (const auto& p : head.parameters()) ps.push_back(p);
    return ps;
  }

  template <typename Rng>
  std::vector<SliceSpec> sample_step(Rng& rng) {
    clear_step();
    if (!scheme.active()) return {};
    if (scheme.kind == SchemeKind::sliceout) {
      for (std::size_t i = 0; i < hidden.size(); ++i) {
        step_specs.push_back(sample_slice(rng, dims.hidden[i], kept_widths[i]));
      }
      for (std::size_t i = 0; i < hidden.size(); ++i) {
        hidden[i].out_spec = step_specs[i];
        hidden[i].in_spec = i == 0 ? std::nullopt : std::optional<SliceSpec>(step_specs[i - 1]);
      }
      head.in_spec = step_specs.back();
      return step_specs;
    }
    if (scheme.kind == SchemeKind::controlled) {
      for (std::size_t i = 0; i < hidden.size(); ++i) {
        keep_sets.push_back(sample_keep_indices(rng, dims.hidden[i], kept_widths[i]));
      }
    }
    return {};
  }

  void clear_step() {
    step_specs.clear();
    keep_sets.clear();
    for (auto& l : hidden) {
      l.in_spec.reset();
      l.out_spec.reset();
    }
    head.in_spec.reset();
    head.out_spec.reset();
  }

  NodePtr<T> forward(const NodePtr<T>& x, bool training, std::mt19937_64* mask_rng = nullptr) {
    if (training && scheme.kind == SchemeKind::controlled && !keep_sets.empty()) {
      return forward_controlled(x, mask_rng);
    }
    NodePtr<T> h = x;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      h = dense_sliceout_forward(h, hidden[i], training);
      h = relu(h);
      if (training && scheme.kind == SchemeKind::standard && scheme.active()) {
        if (mask_rng == nullptr) throw usage_error("mlp: standard dropout needs an rng");
        h = apply_standard_dropout(h, scheme.rate, *mask_rng);
      }
    }
    return dense_sliceout_forward(h, head, training);
  }

private:
  NodePtr<T> forward_controlled(const NodePtr<T>& x, std::mt19937_64*) {
    NodePtr<T> h = x;
    std::vector<std::size_t> prev;  // kept input indices of the next layer
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      auto& layer = hidden[i];
      const auto& rows = keep_sets[i];
      std::vector<std::size_t> cols = prev;
      if (cols.empty()) {
        cols.resize(layer.in_width());
        for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
      }
      NodePtr<T> wg = controlled_gather(layer.weight, rows, cols);
      NodePtr<T> y = matmul_nt(h, wg);
      if (layer.bias) y = add_rowvec(y, gather1d(layer.bias, rows));
      // Fixed-size uniform subsets keep every unit with probability w/m,
      // so the per-node and flow factors coincide at m/w.
      y = mul_scalar(y, static_cast<T>(flow_norm_factor(dims.hidden[i], rows.size())));
      h = relu(y);
      prev = rows;
    }
    std::vector<std::size_t> all_rows(head.out_width());
    for (std::size_t j = 0; j < all_rows.size(); ++j) all_rows[j] = j;
    NodePtr<T> wg = controlled_gather(head.weight, all_rows, prev);
    NodePtr<T> y = matmul_nt(h, wg);
    if (head.bias) y = add_rowvec(y, head.bias);
    return y;
  }
};

template <typename T, typename Rng>
MlpClassifier<T> make_mlp(Rng& rng, const ModelConfig& dims, const SliceScheme& scheme) {
  MlpClassifier<T> m;
  m.dims = dims;
  m.scheme = scheme;
  std::size_t prev = dims.input_dim;
  for (std::size_t width : dims.hidden) {
    m.hidden.push_back(make_dense_layer<T>(rng, prev, width, scheme));
    prev = width;
  }
  m.head = make_dense_layer<T>(rng, prev, dims.classes, SliceScheme{});
  if (scheme.active() && scheme.kind != SchemeKind::standard) {
    for (std::size_t width : dims.hidden) {
      m.kept_widths.push_back(slice_width_for_layer(width, scheme.rate));
    }
  } else {
    m.kept_widths.assign(dims.hidden.size(), 0);
    for (std::size_t i = 0; i < dims.hidden.size(); ++i) m.kept_widths[i] = dims.hidden[i];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Small residual CNN
// ---------------------------------------------------------------------------

/// Stem conv, one sliced residual block, global average pooling, linear
/// head. Input rows are reshaped to single-channel square images.
template <typename T>
struct ResidualCnnClassifier {
  ModelConfig dims;
  SliceScheme scheme;
  std::size_t image = 0;  // side length
  NodePtr<T> stem_kernel; // [channels, 1, 3, 3]
  SliceResidualBlock<T> block;
  DenseSliceLayer<T> head;  // [classes, channels]

  std::vector<NodePtr<T>> parameters() const {
    std::vector<NodePtr<T>> ps{stem_kernel};
    for (const auto& p : block.parameters()) ps.push_back(p);
    for (const auto& p : head.parameters()) ps.push_back(p);
    return ps;
  }

  template <typename Rng>
  std::vector<SliceSpec> sample_step(Rng& rng) {
    block.sample_step(rng, image, image);
    if (block.channel_spec) return {*block.channel_spec};
    return {};
  }

  void clear_step() { block.clear_step(); }

  NodePtr<T> forward(const NodePtr<T>& x, bool training, std::mt19937_64* mask_rng = nullptr) {
    const std::size_t batch = x->value.shape(0);
    NodePtr<T> img = reshape(x, {batch, std::size_t{1}, image, image});
    NodePtr<T> h = relu(conv2d(img, stem_kernel, 1, 1));
    h = block.forward(h, training, mask_rng);
    h = global_avg_pool(h);
    return dense_sliceout_forward(h, head, training);
  }
};

template <typename T, typename Rng>
ResidualCnnClassifier<T> make_residual_cnn(Rng& rng, const ModelConfig& dims,
                                           const SliceScheme& scheme) {
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(double(dims.input_dim))));
  if (side * side != dims.input_dim) {
    throw config_error("resblock model needs a square input dimension, got " +
                       std::to_string(dims.input_dim));
  }
  if (scheme.kind == SchemeKind::controlled) {
    throw config_error("controlled dropout is a fully connected baseline; use the mlp model");
  }
  ResidualCnnClassifier<T> m;
  m.dims = dims;
  m.scheme = scheme;
  m.image = side;
  Tensor<T> stem = Tensor<T>::zeros({dims.channels, 1, 3, 3});
  fill_normal(stem, rng, 0.0, std::sqrt(2.0 / 9.0));
  m.stem_kernel = parameter(std::move(stem));
  ResidualBlockConfig bc;
  bc.channels = dims.channels;
  bc.expanded = dims.expanded;
  bc.scheme = scheme;
  bc.placement = dims.placement;
  m.block = make_residual_block<T>(rng, bc);
  m.head = make_dense_layer<T>(rng, dims.channels, dims.classes, SliceScheme{});
  return m;
}

// ---------------------------------------------------------------------------
// Attention classifier
// ---------------------------------------------------------------------------

/// Treats each input row as a short token sequence, runs one attention
/// block per sample, mean-pools the tokens and classifies with a shared
/// linear head.
template <typename T>
struct AttentionClassifier {
  ModelConfig dims;
  SliceScheme scheme;
  AttentionSliceLayer<T> layer;
  DenseSliceLayer<T> head;  // [classes, model_dim]

  std::vector<NodePtr<T>> parameters() const {
    std::vector<NodePtr<T>> ps = layer.parameters();
    for (const auto& p : head.parameters()) ps.push_back(p);
    return ps;
  }

  template <typename Rng>
  std::vector<SliceSpec> sample_step(Rng& rng) {
    layer.sample_step(rng);
    std::vector<SliceSpec> specs;
    if (layer.qk_spec) specs.push_back(*layer.qk_spec);
    if (layer.v_spec) specs.push_back(*layer.v_spec);
    if (layer.ff_spec) specs.push_back(*layer.ff_spec);
    return specs;
  }

  void clear_step() { layer.clear_step(); }

  NodePtr<T> forward(const NodePtr<T>& x, bool training, std::mt19937_64* mask_rng = nullptr) {
    const std::size_t batch = x->value.shape(0);
    std::vector<NodePtr<T>> pooled;
    pooled.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      NodePtr<T> row = slice_view(x, 0, i, 1);
      NodePtr<T> tokens = reshape(row, {dims.seq_len, dims.model_dim});
      NodePtr<T> out = layer.forward(tokens, training, mask_rng);
      pooled.push_back(mean_rows(out));
    }
    NodePtr<T> features = concat_rows(pooled);
    return dense_sliceout_forward(features, head, training);
  }
};

template <typename T, typename Rng>
AttentionClassifier<T> make_attention_model(Rng& rng, const ModelConfig& dims,
                                            const SliceScheme& scheme) {
  if (dims.seq_len * dims.model_dim != dims.input_dim) {
    throw config_error("attention model needs input_dim == seq_len * model_dim");
  }
  if (scheme.kind == SchemeKind::controlled) {
    throw config_error("controlled dropout is a fully connected baseline; use the mlp model");
  }
  AttentionClassifier<T> m;
  m.dims = dims;
  m.scheme = scheme;
  AttentionSliceConfig ac;
  ac.model_dim = dims.model_dim;
  ac.heads = dims.heads;
  ac.ff_dim = dims.ff_dim;
  ac.scheme = scheme;
  m.layer = make_attention_layer<T>(rng, ac);
  m.head = make_dense_layer<T>(rng, dims.model_dim, dims.classes, SliceScheme{});
  return m;
}

} // namespace sliceout
