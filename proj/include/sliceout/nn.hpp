// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "sliceout/autodiff.hpp"
#include "sliceout/slicing.hpp"

namespace sliceout {

// ---------------------------------------------------------------------------
// Normalization placement
// ---------------------------------------------------------------------------

/// Applies a slice normalisation exactly once per forward pass, either
/// immediately after slicing or at a delayed position in a block. A second
/// application within the same pass is a usage error.
template <typename T>
class BlockNormalizer {
public:
  static BlockNormalizer identity() { return BlockNormalizer(); }

  static BlockNormalizer flow(double factor) {
    BlockNormalizer n;
    n.factor_ = factor;
    n.enabled_ = factor != 1.0;
    return n;
  }

  static BlockNormalizer per_unit(std::vector<T> reciprocals) {
    BlockNormalizer n;
    n.reciprocals_ = std::move(reciprocals);
    n.enabled_ = true;
    return n;
  }

  bool enabled() const { return enabled_; }
  bool applied() const { return applied_; }

  NodePtr<T> apply(const NodePtr<T>& y) {
    if (applied_) {
      throw usage_error("normalization applied twice within one block forward");
    }
    applied_ = true;
    if (!enabled_) return y;
    if (!reciprocals_.empty()) {
      if (y->value.rank() == 4) return scale_channels(y, reciprocals_);
      return scale_columns(y, reciprocals_);
    }
    return mul_scalar(y, static_cast<T>(factor_));
  }

private:
  std::vector<T> reciprocals_;
  double factor_ = 1.0;
  bool enabled_ = false;
  bool applied_ = false;
};

/// Applies the scheme's factors at a late block position instead of right
/// after slicing. The guard carries the factors and enforces single
/// application.
template <typename T>
NodePtr<T> delayed_normalize(const NodePtr<T>& y, BlockNormalizer<T>& normalizer) {
  return normalizer.apply(y);
}

// ---------------------------------------------------------------------------
// Dense layers
// ---------------------------------------------------------------------------

/// Fully connected layer with optional contiguous input/output slicing.
/// The full weight [m_out, m_in] stays in place; a step touches only the
/// [s_out, s_out+w_out) x [s_in, s_in+w_in) sub-view.
template <typename T>
struct DenseSliceLayer {
  NodePtr<T> weight;  // [m_out, m_in]
  NodePtr<T> bias;    // [m_out] or null
  SliceScheme scheme;
  KeepProfile out_profile;  // over m_out; built when probabilistic norm is in play

  std::optional<SliceSpec> in_spec;
  std::optional<SliceSpec> out_spec;

  std::size_t in_width() const { return weight->value.shape(1); }
  std::size_t out_width() const { return weight->value.shape(0); }

  std::vector<NodePtr<T>> parameters() const {
    std::vector<NodePtr<T>> ps{weight};
    if (bias) ps.push_back(bias);
    return ps;
  }
};

template <typename T, typename Rng>
DenseSliceLayer<T> make_dense_layer(Rng& rng, std::size_t m_in, std::size_t m_out,
                                    SliceScheme scheme = {}, bool with_bias = true) {
  DenseSliceLayer<T> layer;
  Tensor<T> w = Tensor<T>::zeros({m_out, m_in});
  fill_normal(w, rng, 0.0, std::sqrt(2.0 / static_cast<double>(m_in)));
  layer.weight = parameter(std::move(w));
  if (with_bias) layer.bias = parameter(Tensor<T>::zeros({m_out}));
  layer.scheme = scheme;
  if (scheme.kind == SchemeKind::sliceout && scheme.active()) {
    layer.out_profile = build_keep_profile(m_out, slice_width(m_out, scheme.rate));
  }
  return layer;
}

/// y = x * W_slice^T + b_slice, then the scheme's normalisation (unless
/// delayed or evaluating). Slice views never copy weight data.
template <typename T>
NodePtr<T> dense_sliceout_forward(const NodePtr<T>& x, DenseSliceLayer<T>& layer, bool training) {
  if (x->value.rank() != 2) throw shape_error("dense forward: expected [batch, features]");
  const std::size_t m_in = layer.in_width();
  const std::size_t m_out = layer.out_width();

  const std::optional<SliceSpec>& in_spec = training ? layer.in_spec : std::nullopt;
  const std::optional<SliceSpec>& out_spec = training ? layer.out_spec : std::nullopt;

  std::size_t expect_cols = m_in;
  if (in_spec) {
    if (in_spec->layer_width != m_in) {
      throw alignment_error("dense forward: input slice was sampled for width " +
                            std::to_string(in_spec->layer_width) + ", weight has " +
                            std::to_string(m_in) + " columns");
    }
    expect_cols = in_spec->width;
  }
  if (x->value.shape(1) != expect_cols) {
    throw alignment_error("dense forward: input has " + std::to_string(x->value.shape(1)) +
                          " features, slice expects " + std::to_string(expect_cols));
  }
  if (out_spec && out_spec->layer_width != m_out) {
    throw alignment_error("dense forward: output slice width mismatch");
  }

  NodePtr<T> w = layer.weight;
  if (out_spec && !out_spec->full()) w = slice_view(w, 0, out_spec->start, out_spec->width);
  if (in_spec && !in_spec->full()) w = slice_view(w, 1, in_spec->start, in_spec->width);
  NodePtr<T> y = matmul_nt(x, w);
  if (layer.bias) {
    NodePtr<T> b = layer.bias;
    if (out_spec && !out_spec->full()) b = slice_view(b, 0, out_spec->start, out_spec->width);
    y = add_rowvec(y, b);
  }

  if (training && layer.scheme.kind == SchemeKind::sliceout && !layer.scheme.delayed &&
      out_spec && !out_spec->full()) {
    if (layer.scheme.normalization == Normalization::flow) {
      y = mul_scalar(y, static_cast<T>(flow_norm_factor(m_out, out_spec->width)));
    } else {
      std::vector<T> recip(out_spec->width);
      for (std::size_t j = 0; j < out_spec->width; ++j) {
        recip[j] = static_cast<T>(layer.out_profile.reciprocal[out_spec->start + j]);
      }
      y = scale_columns(y, std::move(recip));
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Patch slicing
// ---------------------------------------------------------------------------

/// Per-axis kept extent: round(full * sqrt(1 - p)) floored at 1, so the
/// kept area is close to (1 - p) of the input.
inline std::size_t patch_extent(std::size_t full, double p) {
  if (p < 0.0 || p >= 1.0) throw rate_error("patch_extent: rate must lie in [0, 1)");
  const double kept = std::round(static_cast<double>(full) * std::sqrt(1.0 - p));
  std::size_t e = kept < 1.0 ? 1 : static_cast<std::size_t>(kept);
  if (e > full) e = full;
  return e;
}

template <typename Rng>
std::pair<SliceSpec, SliceSpec> sample_patch(Rng& rng, std::size_t h, std::size_t w, double p) {
  const std::size_t kh = patch_extent(h, p);
  const std::size_t kw = patch_extent(w, p);
  return {sample_slice(rng, h, kh), sample_slice(rng, w, kw)};
}

/// One contiguous spatial window shared across batch and channels,
/// returned as a zero-copy view and flow-normalised by the area ratio.
template <typename T, typename Rng>
NodePtr<T> patch_sliceout(const NodePtr<T>& x, double p, Rng& rng) {
  if (x->value.rank() != 4) throw shape_error("patch_sliceout: expected NCHW");
  if (p == 0.0) return x;
  const std::size_t H = x->value.shape(2), W = x->value.shape(3);
  auto [rows, cols] = sample_patch(rng, H, W, p);
  if (rows.width > H || cols.width > W) {
    throw size_error("patch_sliceout: window exceeds input");
  }
  NodePtr<T> v = slice_view(x, 2, rows.start, rows.width);
  v = slice_view(v, 3, cols.start, cols.width);
  const double factor = static_cast<double>(H * W) / static_cast<double>(rows.width * cols.width);
  return mul_scalar(v, static_cast<T>(factor));
}

// ---------------------------------------------------------------------------
// Residual block with channel or patch slicing
// ---------------------------------------------------------------------------

enum class BlockPlacement { first_conv, input_patch };

struct ResidualBlockConfig {
  std::size_t channels = 8;   // block input/output channels
  std::size_t expanded = 16;  // conv1 output channels the slice acts on
  SliceScheme scheme;
  BlockPlacement placement = BlockPlacement::first_conv;
  bool use_batch_norm = true;
};

/// conv1 (3x3, C -> E) -> batch norm -> relu -> conv2 (3x3, E -> C) with a
/// skip connection. Channel slicing keeps one contiguous range of conv1
/// output channels and propagates it through the batch norm segment and
/// conv2 input channels; the projection back to C channels ends the sliced
/// region. All three touch points share one SliceSpec.
template <typename T>
struct SliceResidualBlock {
  ResidualBlockConfig config;
  NodePtr<T> conv1_kernel;  // [E, C, 3, 3]
  NodePtr<T> conv2_kernel;  // [C, E, 3, 3]
  NodePtr<T> gamma, beta;   // [E]
  Tensor<T> running_mean, running_var;  // [E]
  KeepProfile channel_profile;          // over E

  std::optional<SliceSpec> channel_spec;             // per step, over E
  std::optional<SliceSpec> patch_rows, patch_cols;   // per step, spatial

  std::vector<NodePtr<T>> parameters() const {
    std::vector<NodePtr<T>> ps{conv1_kernel, conv2_kernel};
    if (config.use_batch_norm) {
      ps.push_back(gamma);
      ps.push_back(beta);
    }
    return ps;
  }

  /// Samples this step's slice. Patch placement needs the incoming
  /// spatial extent to size its window.
  template <typename Rng>
  void sample_step(Rng& rng, std::size_t image_h = 0, std::size_t image_w = 0) {
    clear_step();
    if (config.scheme.kind != SchemeKind::sliceout || !config.scheme.active()) return;
    if (config.placement == BlockPlacement::first_conv) {
      channel_spec = sample_slice(rng, config.expanded,
                                  slice_width(config.expanded, config.scheme.rate));
    } else {
      if (image_h == 0 || image_w == 0) {
        throw usage_error("residual block: patch placement needs the image extent");
      }
      auto [r, c] = sample_patch(rng, image_h, image_w, config.scheme.rate);
      patch_rows = r;
      patch_cols = c;
    }
  }

  void clear_step() {
    channel_spec.reset();
    patch_rows.reset();
    patch_cols.reset();
  }

  NodePtr<T> forward(const NodePtr<T>& x, bool training, std::mt19937_64* mask_rng = nullptr) {
    return forward_with_specs(x, channel_spec, channel_spec, channel_spec, training, mask_rng);
  }

  /// Variant taking the slice for each touch point explicitly; a mismatch
  /// between them is an alignment error.
  NodePtr<T> forward_with_specs(const NodePtr<T>& x, const std::optional<SliceSpec>& conv1_spec,
                                const std::optional<SliceSpec>& bn_spec,
                                const std::optional<SliceSpec>& conv2_spec, bool training,
                                std::mt19937_64* mask_rng = nullptr) {
    if (!(conv1_spec == bn_spec && bn_spec == conv2_spec)) {
      throw alignment_error(
          "residual block: conv1, batch norm and conv2 must share one channel slice");
    }
    if (x->value.rank() != 4 || x->value.shape(1) != config.channels) {
      throw shape_error("residual block: input channel mismatch");
    }
    const bool slicing = training && conv1_spec.has_value() && !conv1_spec->full() &&
                         config.placement == BlockPlacement::first_conv;
    const bool patching = training && config.placement == BlockPlacement::input_patch &&
                          patch_rows.has_value() && patch_cols.has_value();

    NodePtr<T> input = x;
    BlockNormalizer<T> norm = BlockNormalizer<T>::identity();
    if (slicing) {
      const SliceSpec& spec = *conv1_spec;
      if (config.scheme.normalization == Normalization::flow) {
        norm = BlockNormalizer<T>::flow(flow_norm_factor(config.expanded, spec.width));
      } else {
        std::vector<T> recip(spec.width);
        for (std::size_t c = 0; c < spec.width; ++c) {
          recip[c] = static_cast<T>(channel_profile.reciprocal[spec.start + c]);
        }
        norm = BlockNormalizer<T>::per_unit(std::move(recip));
      }
    } else if (patching) {
      const std::size_t H = x->value.shape(2), W = x->value.shape(3);
      if (patch_rows->layer_width != H || patch_cols->layer_width != W) {
        throw size_error("residual block: patch window sampled for a different extent");
      }
      input = slice_view(x, 2, patch_rows->start, patch_rows->width);
      input = slice_view(input, 3, patch_cols->start, patch_cols->width);
      norm = BlockNormalizer<T>::flow(static_cast<double>(H * W) /
                                      static_cast<double>(patch_rows->width * patch_cols->width));
    }

    NodePtr<T> k1 = conv1_kernel;
    std::size_t seg_start = 0;
    if (slicing) {
      k1 = slice_view(k1, 0, conv1_spec->start, conv1_spec->width);
      seg_start = conv1_spec->start;
    }
    // Normalization belongs to the conv branch; the skip always carries
    // the raw (possibly windowed) input.
    NodePtr<T> branch = input;
    if (patching && !config.scheme.delayed && norm.enabled()) branch = norm.apply(branch);
    NodePtr<T> y = conv2d(branch, k1, 1, 1);
    if (slicing && !config.scheme.delayed && norm.enabled()) y = norm.apply(y);

    if (config.use_batch_norm) {
      NodePtr<T> g = gamma;
      NodePtr<T> b = beta;
      if (slicing) {
        g = slice_view(g, 0, conv1_spec->start, conv1_spec->width);
        b = slice_view(b, 0, conv1_spec->start, conv1_spec->width);
      }
      y = batch_norm2d(y, g, b, running_mean, running_var, seg_start, training);
    }
    y = relu(y);

    if (training && config.scheme.kind == SchemeKind::standard && config.scheme.active()) {
      if (mask_rng == nullptr) {
        throw usage_error("residual block: standard dropout needs an rng");
      }
      y = dropout(y, config.scheme.rate, *mask_rng);
    }

    if (config.scheme.delayed && norm.enabled()) y = delayed_normalize(y, norm);

    NodePtr<T> k2 = conv2_kernel;
    if (slicing) k2 = slice_view(k2, 1, conv1_spec->start, conv1_spec->width);
    y = conv2d(y, k2, 1, 1);
    return add(y, input);
  }
};

template <typename T, typename Rng>
SliceResidualBlock<T> make_residual_block(Rng& rng, ResidualBlockConfig config) {
  SliceResidualBlock<T> block;
  block.config = config;
  Tensor<T> k1 = Tensor<T>::zeros({config.expanded, config.channels, 3, 3});
  fill_normal(k1, rng, 0.0, std::sqrt(2.0 / (9.0 * static_cast<double>(config.channels))));
  block.conv1_kernel = parameter(std::move(k1));
  Tensor<T> k2 = Tensor<T>::zeros({config.channels, config.expanded, 3, 3});
  fill_normal(k2, rng, 0.0, std::sqrt(2.0 / (9.0 * static_cast<double>(config.expanded))));
  block.conv2_kernel = parameter(std::move(k2));
  block.gamma = parameter(Tensor<T>::full({config.expanded}, T(1)));
  block.beta = parameter(Tensor<T>::zeros({config.expanded}));
  block.running_mean = Tensor<T>::zeros({config.expanded});
  block.running_var = Tensor<T>::full({config.expanded}, T(1));
  if (config.scheme.kind == SchemeKind::sliceout && config.scheme.active() &&
      config.placement == BlockPlacement::first_conv) {
    block.channel_profile = build_keep_profile(
        config.expanded, slice_width_for_layer(config.expanded, config.scheme.rate));
  }
  return block;
}

/// Channel-sliced block forward under the block's current step slice.
template <typename T>
NodePtr<T> channel_sliceout_conv(const NodePtr<T>& x, SliceResidualBlock<T>& block,
                                 bool training) {
  return block.forward(x, training);
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

struct AttentionSliceConfig {
  std::size_t model_dim = 8;
  std::size_t heads = 2;
  std::size_t ff_dim = 16;
  SliceScheme scheme;

  std::size_t head_dim() const { return model_dim / heads; }
};

/// Scaled dot-product attention with slice alignment enforcement: the
/// query and key slices must be one and the same, and the softmax
/// temperature is the sliced dimensionality during sliced training.
template <typename T>
NodePtr<T> attention_weights(const NodePtr<T>& q, const NodePtr<T>& k,
                             const std::optional<SliceSpec>& q_spec,
                             const std::optional<SliceSpec>& k_spec, std::size_t alpha) {
  if (q_spec != k_spec) {
    throw alignment_error("attention: query and key slices must be identical");
  }
  if (q->value.shape(1) != k->value.shape(1)) {
    throw alignment_error("attention: query/key dimensionality mismatch");
  }
  if (alpha == 0) throw usage_error("attention: temperature must be positive");
  NodePtr<T> scores = matmul_nt(q, k);
  scores = mul_scalar(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(alpha))));
  return softmax(scores, 1);
}

template <typename T>
NodePtr<T> attention_sliceout(const NodePtr<T>& q, const NodePtr<T>& k, const NodePtr<T>& v,
                              const std::optional<SliceSpec>& q_spec,
                              const std::optional<SliceSpec>& k_spec, std::size_t alpha) {
  NodePtr<T> w_attn = attention_weights(q, k, q_spec, k_spec, alpha);
  return matmul(w_attn, v);
}

/// Single transformer-style block: multi-head self attention plus a
/// feed-forward sublayer, both with optional slicing. Q/K share one spec
/// per step; values and the feed-forward hidden layer are normalised per
/// the scheme.
template <typename T>
struct AttentionSliceLayer {
  AttentionSliceConfig config;
  std::vector<NodePtr<T>> wq, wk, wv;  // per head, [d_h, d]
  std::vector<NodePtr<T>> wo;          // per head, [d, d_h]
  NodePtr<T> ff1_w, ff1_b;             // [d_ff, d], [d_ff]
  NodePtr<T> ff2_w, ff2_b;             // [d, d_ff], [d]
  KeepProfile head_profile;            // over head_dim (value norm)
  KeepProfile ff_profile;              // over ff_dim

  std::optional<SliceSpec> qk_spec;  // shared across Q and K, all heads
  std::optional<SliceSpec> v_spec;
  std::optional<SliceSpec> ff_spec;

  std::vector<NodePtr<T>> parameters() const {
    std::vector<NodePtr<T>> ps;
    for (const auto& p : wq) ps.push_back(p);
    for (const auto& p : wk) ps.push_back(p);
    for (const auto& p : wv) ps.push_back(p);
    for (const auto& p : wo) ps.push_back(p);
    ps.push_back(ff1_w);
    ps.push_back(ff1_b);
    ps.push_back(ff2_w);
    ps.push_back(ff2_b);
    return ps;
  }

  template <typename Rng>
  void sample_step(Rng& rng) {
    clear_step();
    if (config.scheme.kind != SchemeKind::sliceout || !config.scheme.active()) return;
    const std::size_t dh = config.head_dim();
    qk_spec = sample_slice(rng, dh, slice_width(dh, config.scheme.rate));
    v_spec = sample_slice(rng, dh, slice_width(dh, config.scheme.rate));
    ff_spec = sample_slice(rng, config.ff_dim, slice_width(config.ff_dim, config.scheme.rate));
  }

  void clear_step() {
    qk_spec.reset();
    v_spec.reset();
    ff_spec.reset();
  }

  NodePtr<T> forward(const NodePtr<T>& x, bool training, std::mt19937_64* mask_rng = nullptr) {
    if (x->value.rank() != 2 || x->value.shape(1) != config.model_dim) {
      throw shape_error("attention: expected [seq, model_dim] input");
    }
    const std::size_t dh = config.head_dim();
    const bool slicing = training && qk_spec.has_value();
    const std::optional<SliceSpec>& qk = slicing ? qk_spec : std::nullopt;
    const std::optional<SliceSpec>& vs = slicing ? v_spec : std::nullopt;
    const std::size_t alpha = (qk && !qk->full()) ? qk->width : dh;

    NodePtr<T> attn_out;
    for (std::size_t h = 0; h < config.heads; ++h) {
      NodePtr<T> wq_h = wq[h];
      NodePtr<T> wk_h = wk[h];
      NodePtr<T> wv_h = wv[h];
      NodePtr<T> wo_h = wo[h];
      if (qk && !qk->full()) {
        wq_h = slice_view(wq_h, 0, qk->start, qk->width);
        wk_h = slice_view(wk_h, 0, qk->start, qk->width);
      }
      if (vs && !vs->full()) {
        wv_h = slice_view(wv_h, 0, vs->start, vs->width);
        wo_h = slice_view(wo_h, 1, vs->start, vs->width);
      }
      NodePtr<T> q = matmul_nt(x, wq_h);
      NodePtr<T> k = matmul_nt(x, wk_h);
      NodePtr<T> v = matmul_nt(x, wv_h);
      if (vs && !vs->full()) {
        if (config.scheme.normalization == Normalization::flow) {
          v = mul_scalar(v, static_cast<T>(flow_norm_factor(dh, vs->width)));
        } else {
          std::vector<T> recip(vs->width);
          for (std::size_t j = 0; j < vs->width; ++j) {
            recip[j] = static_cast<T>(head_profile.reciprocal[vs->start + j]);
          }
          v = scale_columns(v, std::move(recip));
        }
      }
      NodePtr<T> head = attention_sliceout(q, k, v, qk, qk, alpha);
      NodePtr<T> proj = matmul_nt(head, wo_h);
      attn_out = attn_out ? add(attn_out, proj) : proj;
    }
    if (training && config.scheme.kind == SchemeKind::standard && config.scheme.active()) {
      if (mask_rng == nullptr) throw usage_error("attention: standard dropout needs an rng");
      attn_out = dropout(attn_out, config.scheme.rate, *mask_rng);
    }
    NodePtr<T> x1 = layer_norm(add(x, attn_out));

    const std::optional<SliceSpec>& ff = slicing ? ff_spec : std::nullopt;
    NodePtr<T> w1 = ff1_w;
    NodePtr<T> b1 = ff1_b;
    NodePtr<T> w2 = ff2_w;
    if (ff && !ff->full()) {
      w1 = slice_view(w1, 0, ff->start, ff->width);
      b1 = slice_view(b1, 0, ff->start, ff->width);
      w2 = slice_view(w2, 1, ff->start, ff->width);
    }
    NodePtr<T> hidden = add_rowvec(matmul_nt(x1, w1), b1);
    if (ff && !ff->full()) {
      if (config.scheme.normalization == Normalization::flow) {
        hidden = mul_scalar(hidden, static_cast<T>(flow_norm_factor(config.ff_dim, ff->width)));
      } else {
        std::vector<T> recip(ff->width);
        for (std::size_t j = 0; j < ff->width; ++j) {
          recip[j] = static_cast<T>(ff_profile.reciprocal[ff->start + j]);
        }
        hidden = scale_columns(hidden, std::move(recip));
      }
    }
    hidden = relu(hidden);
    if (training && config.scheme.kind == SchemeKind::standard && config.scheme.active()) {
      hidden = dropout(hidden, config.scheme.rate, *mask_rng);
    }
    NodePtr<T> ff_out = add_rowvec(matmul_nt(hidden, w2), ff2_b);
    return layer_norm(add(x1, ff_out));
  }
};

template <typename T, typename Rng>
AttentionSliceLayer<T> make_attention_layer(Rng& rng, AttentionSliceConfig config) {
  if (config.heads == 0 || config.model_dim % config.heads != 0) {
    throw config_error("attention: model_dim must divide evenly across heads");
  }
  AttentionSliceLayer<T> layer;
  layer.config = config;
  const std::size_t d = config.model_dim, dh = config.head_dim();
  auto proj = [&](std::size_t rows, std::size_t cols) {
    Tensor<T> w = Tensor<T>::zeros({rows, cols});
    fill_normal(w, rng, 0.0, std::sqrt(1.0 / static_cast<double>(cols)));
    return parameter(std::move(w));
  };
  for (std::size_t h = 0; h < config.heads; ++h) {
    layer.wq.push_back(proj(dh, d));
    layer.wk.push_back(proj(dh, d));
    layer.wv.push_back(proj(dh, d));
    layer.wo.push_back(proj(d, dh));
  }
  layer.ff1_w = proj(config.ff_dim, d);
  layer.ff1_b = parameter(Tensor<T>::zeros({config.ff_dim}));
  layer.ff2_w = proj(d, config.ff_dim);
  layer.ff2_b = parameter(Tensor<T>::zeros({d}));
  if (config.scheme.kind == SchemeKind::sliceout && config.scheme.active()) {
    layer.head_profile = build_keep_profile(dh, slice_width_for_layer(dh, config.scheme.rate));
    layer.ff_profile =
        build_keep_profile(config.ff_dim, slice_width_for_layer(config.ff_dim, config.scheme.rate));
  }
  return layer;
}

// ---------------------------------------------------------------------------
// Architecture counting
// ---------------------------------------------------------------------------

/// Distinct thinned architectures a weight matrix is sampled from: linear
/// in the slice freedom of a singly sliced side, quadratic when both input
/// and output are sliced.
inline std::uint64_t architecture_count(const std::optional<SliceSpec>& input_slicing,
                                        const std::optional<SliceSpec>& output_slicing) {
  std::uint64_t count = 1;
  if (input_slicing) {
    count *= eligible_starts(input_slicing->layer_width, input_slicing->width).count();
  }
  if (output_slicing) {
    count *= eligible_starts(output_slicing->layer_width, output_slicing->width).count();
  }
  return count;
}

inline std::uint64_t architecture_count(std::size_t m, std::size_t w) {
  return eligible_starts(m, w).count();
}

} // namespace sliceout
