// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sliceout/costmodel.hpp"
#include "sliceout/gradcheck.hpp"
#include "sliceout/nn.hpp"

namespace sliceout {

/// Result of one exhaustive-enumeration moment check.
struct MomentCheckResult {
  double max_first_moment_deviation = 0.0;
  double band_second_moment_deviation = 0.0;
  double edge_second_moment_deviation = 0.0;
  double flow_conservation_deviation = 0.0;
  std::uint64_t slice_count = 0;
  std::size_t band_pairs = 0;
};

/// A stack of linear layers; layer i maps widths[i] -> widths[i+1] and is
/// output-sliced at `rate` when sliced[i] is set.
struct LinearStackConfig {
  std::vector<std::size_t> widths = {6, 8};
  std::vector<bool> sliced = {true};
  double rate = 0.4;
  std::uint64_t seed = 1;
};

namespace detail {

inline void validate_stack(const LinearStackConfig& cfg, std::uint64_t max_combos) {
  if (cfg.widths.size() < 2 || cfg.sliced.size() != cfg.widths.size() - 1) {
    throw size_error("linear stack: widths and sliced flags disagree");
  }
  for (std::size_t w : cfg.widths) {
    if (w == 0 || w > 64) throw size_error("linear stack: widths must lie in [1, 64]");
  }
  std::uint64_t combos = 1;
  for (std::size_t i = 0; i < cfg.sliced.size(); ++i) {
    if (!cfg.sliced[i]) continue;
    const std::size_t m = cfg.widths[i + 1];
    combos *= eligible_starts(m, slice_width(m, cfg.rate)).count();
    if (combos > max_combos) throw size_error("linear stack: enumeration too large");
  }
}

inline std::vector<std::vector<double>> random_matrix(std::mt19937_64& rng, std::size_t rows,
                                                      std::size_t cols, bool positive) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.5, 1.5);
  std::vector<std::vector<double>> w(rows, std::vector<double>(cols));
  for (auto& row : w) {
    for (auto& v : row) v = positive ? uniform(rng) : normal(rng);
  }
  return w;
}

inline std::vector<double> matvec(const std::vector<std::vector<double>>& w,
                                  const std::vector<double>& x) {
  std::vector<double> y(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += w[i][j] * x[j];
  }
  return y;
}

} // namespace detail

/// Enumerates every eligible slice combination of the stack, zero-pads and
/// normalises each sliced output, and compares the uniform average with
/// the full forward pass. Probabilistic normalisation preserves the first
/// moment exactly; flow normalisation deviates at the edge units, so for
/// it the conserved throughput sum(P(j)) * m / w == m is verified instead.
///
/// `inject_fault` deliberately skews one normalisation factor; it exists
/// so the verification harness can prove it fails on a broken build.
inline MomentCheckResult check_first_moment(const LinearStackConfig& cfg,
                                            Normalization normalization,
                                            bool inject_fault = false) {
  detail::validate_stack(cfg, 1u << 20);
  std::mt19937_64 rng(cfg.seed);
  const std::size_t layers = cfg.sliced.size();

  std::vector<std::vector<std::vector<double>>> weights;
  for (std::size_t i = 0; i < layers; ++i) {
    weights.push_back(detail::random_matrix(rng, cfg.widths[i + 1], cfg.widths[i], false));
  }
  std::vector<double> x(cfg.widths[0]);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : x) v = normal(rng);

  std::vector<double> full = x;
  for (std::size_t i = 0; i < layers; ++i) full = detail::matvec(weights[i], full);

  struct LayerSlicing {
    bool sliced = false;
    std::size_t width = 0;
    KeepProfile profile;
  };
  std::vector<LayerSlicing> slicing(layers);
  MomentCheckResult result;
  result.slice_count = 1;
  for (std::size_t i = 0; i < layers; ++i) {
    if (!cfg.sliced[i]) continue;
    const std::size_t m = cfg.widths[i + 1];
    slicing[i].sliced = true;
    slicing[i].width = slice_width(m, cfg.rate);
    slicing[i].profile = build_keep_profile(m, slicing[i].width);
    result.slice_count *= eligible_starts(m, slicing[i].width).count();
    const double flow = flow_norm_factor(m, slicing[i].width);
    double conserved = 0.0;
    for (std::size_t j = 0; j < m; ++j) conserved += slicing[i].profile.probability[j] * flow;
    result.flow_conservation_deviation =
        std::max(result.flow_conservation_deviation, std::abs(conserved - double(m)));
  }

  std::vector<double> accum(full.size(), 0.0);
  std::vector<std::size_t> starts(layers, 0);
  std::uint64_t combos = 0;
  const bool probabilistic = normalization == Normalization::probabilistic;

  std::function<void(std::size_t)> enumerate = [&](std::size_t layer) {
    if (layer == layers) {
      std::vector<double> h = x;
      for (std::size_t i = 0; i < layers; ++i) {
        std::vector<double> t = detail::matvec(weights[i], h);
        if (!slicing[i].sliced) {
          h = std::move(t);
          continue;
        }
        const std::size_t m = cfg.widths[i + 1];
        const std::size_t w = slicing[i].width;
        const std::size_t s = starts[i];
        std::vector<double> padded(m, 0.0);
        const double flow = flow_norm_factor(m, w);
        for (std::size_t j = s; j < s + w; ++j) {
          double factor = probabilistic ? slicing[i].profile.reciprocal[j] : flow;
          if (inject_fault && i == 0 && j == s) factor *= 1.5;
          padded[j] = t[j] * factor;
        }
        h = std::move(padded);
      }
      for (std::size_t j = 0; j < h.size(); ++j) accum[j] += h[j];
      ++combos;
      return;
    }
    if (!slicing[layer].sliced) {
      enumerate(layer + 1);
      return;
    }
    const auto range =
        eligible_starts(cfg.widths[layer + 1], slicing[layer].width);
    for (std::size_t s = range.first; s <= range.last; ++s) {
      starts[layer] = s;
      enumerate(layer + 1);
    }
  };
  enumerate(0);

  for (std::size_t j = 0; j < full.size(); ++j) {
    const double avg = accum[j] / static_cast<double>(combos);
    result.max_first_moment_deviation =
        std::max(result.max_first_moment_deviation, std::abs(avg - full[j]));
  }
  if (combos != result.slice_count) {
    throw numeric_error("first moment check: enumeration count mismatch");
  }
  return result;
}

/// Second-moment configuration for one layer, optionally with the input
/// axis sliced as well (the regime where preservation is only
/// approximate).
struct SecondMomentConfig {
  std::size_t in_width = 16;
  std::size_t out_width = 16;
  double rate = 0.375;
  bool slice_input = false;
  std::uint64_t seed = 1;
};

/// Enumerates E[S(y_j1) * S(y_j2)] under probabilistic normalisation and
/// compares with the full network's y_j1 * y_j2. Pairs inside the middle
/// band [m-w, w-1] (every slice keeps them when the rate is at most one
/// half) are the asserted regime; edge pairs are reported only, since the
/// second moment is genuinely not preserved there. The 5% tolerance used
/// by callers is a convention for "approximately"; no tighter bound is
/// claimed.
inline MomentCheckResult check_second_moment(const SecondMomentConfig& cfg) {
  if (cfg.rate > 0.5) throw rate_error("second moment check: rate must be at most 0.5");
  if (cfg.in_width == 0 || cfg.in_width > 64 || cfg.out_width == 0 || cfg.out_width > 64) {
    throw size_error("second moment check: widths must lie in [1, 64]");
  }
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = cfg.in_width, m = cfg.out_width;
  const auto w_mat = detail::random_matrix(rng, m, n, true);
  std::vector<double> x(n);
  std::uniform_real_distribution<double> uniform(0.5, 1.5);
  for (auto& v : x) v = uniform(rng);

  const std::size_t w_out = slice_width(m, cfg.rate);
  const KeepProfile out_profile = build_keep_profile(m, w_out);
  const auto out_range = eligible_starts(m, w_out);

  const std::size_t w_in = cfg.slice_input ? slice_width(n, cfg.rate) : n;
  const KeepProfile in_profile = build_keep_profile(n, w_in);
  const auto in_range = eligible_starts(n, w_in);

  const std::vector<double> full = detail::matvec(w_mat, x);
  std::vector<std::vector<double>> accum(m, std::vector<double>(m, 0.0));
  std::uint64_t combos = 0;
  for (std::size_t si = in_range.first; si <= in_range.last; ++si) {
    std::vector<double> xin(n, 0.0);
    for (std::size_t j = si; j < si + w_in; ++j) xin[j] = x[j] * in_profile.reciprocal[j];
    const std::vector<double> t = detail::matvec(w_mat, xin);
    for (std::size_t so = out_range.first; so <= out_range.last; ++so) {
      std::vector<double> y(m, 0.0);
      for (std::size_t j = so; j < so + w_out; ++j) y[j] = t[j] * out_profile.reciprocal[j];
      for (std::size_t j1 = 0; j1 < m; ++j1) {
        for (std::size_t j2 = 0; j2 < m; ++j2) accum[j1][j2] += y[j1] * y[j2];
      }
      ++combos;
    }
  }

  MomentCheckResult result;
  result.slice_count = combos;
  for (std::size_t j1 = 0; j1 < m; ++j1) {
    for (std::size_t j2 = 0; j2 < m; ++j2) {
      const double enumerated = accum[j1][j2] / static_cast<double>(combos);
      const double expected = full[j1] * full[j2];
      const double rel = std::abs(enumerated - expected) / (std::abs(expected) + 1e-300);
      if (out_profile.in_middle_band(j1) && out_profile.in_middle_band(j2)) {
        result.band_second_moment_deviation = std::max(result.band_second_moment_deviation, rel);
        ++result.band_pairs;
      } else {
        result.edge_second_moment_deviation = std::max(result.edge_second_moment_deviation, rel);
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checks
// ---------------------------------------------------------------------------

struct GradientCheckReport {
  double unsliced_dense = 0.0;
  double sliced_dense = 0.0;
  double conv_block = 0.0;
  double sliced_attention = 0.0;

  double worst() const {
    return std::max(std::max(unsliced_dense, sliced_dense),
                    std::max(conv_block, sliced_attention));
  }
};

/// Finite-difference validation of the sliced backward passes on small
/// fixed-slice models, in 64-bit.
inline GradientCheckReport check_gradients(std::uint64_t seed = 7) {
  using D = double;
  GradientCheckReport report;
  std::mt19937_64 rng(seed);

  SliceScheme so;
  so.kind = SchemeKind::sliceout;
  so.rate = 0.5;
  so.normalization = Normalization::probabilistic;

  {
    auto layer = make_dense_layer<D>(rng, 3, 4, SliceScheme{});
    Tensor<D> xv = Tensor<D>::zeros({2, 3});
    fill_normal(xv, rng);
    auto x = leaf(std::move(xv), true);
    std::vector<int> labels = {1, 3};
    auto f = [&](const std::vector<NodePtr<D>>&) {
      return cross_entropy(dense_sliceout_forward(x, layer, true), labels);
    };
    report.unsliced_dense = grad_check<D>(f, {layer.weight, layer.bias, x});
  }

  {
    auto layer = make_dense_layer<D>(rng, 3, 4, so);
    layer.out_spec = SliceSpec{4, 2, 1};
    Tensor<D> xv = Tensor<D>::zeros({2, 3});
    fill_normal(xv, rng);
    auto x = leaf(std::move(xv), true);
    std::vector<int> labels = {0, 1};
    auto f = [&](const std::vector<NodePtr<D>>&) {
      return cross_entropy(dense_sliceout_forward(x, layer, true), labels);
    };
    report.sliced_dense = grad_check<D>(f, {layer.weight, layer.bias, x});
  }

  {
    ResidualBlockConfig bc;
    bc.channels = 2;
    bc.expanded = 4;
    bc.scheme = so;
    auto block = make_residual_block<D>(rng, bc);
    block.channel_spec = SliceSpec{4, 2, 1};
    Tensor<D> xv = Tensor<D>::zeros({1, 2, 5, 5});
    fill_normal(xv, rng);
    auto x = leaf(std::move(xv), true);
    auto f = [&](const std::vector<NodePtr<D>>&) { return sum_all(block.forward(x, true)); };
    std::vector<NodePtr<D>> inputs = block.parameters();
    inputs.push_back(x);
    report.conv_block = grad_check<D>(f, inputs);
  }

  {
    AttentionSliceConfig ac;
    ac.model_dim = 4;
    ac.heads = 1;
    ac.ff_dim = 8;
    ac.scheme = so;
    auto layer = make_attention_layer<D>(rng, ac);
    layer.qk_spec = SliceSpec{4, 2, 1};
    layer.v_spec = SliceSpec{4, 2, 0};
    layer.ff_spec = SliceSpec{8, 4, 2};
    Tensor<D> xv = Tensor<D>::zeros({2, 4});
    fill_normal(xv, rng);
    auto x = leaf(std::move(xv), true);
    // The block ends in a layer norm whose rows sum to zero, so the
    // readout needs distinct column weights to exercise the gradients.
    const std::vector<D> readout = {0.5, 1.2, -0.7, 0.3};
    auto f = [&](const std::vector<NodePtr<D>>&) {
      return sum_all(scale_columns(layer.forward(x, true), readout));
    };
    std::vector<NodePtr<D>> inputs = layer.parameters();
    inputs.push_back(x);
    report.sliced_attention = grad_check<D>(f, inputs);
  }

  return report;
}

// ---------------------------------------------------------------------------
// Count checks
// ---------------------------------------------------------------------------

struct CountCheckCase {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

template <typename T>
std::uint64_t enumerate_distinct_masks(std::size_t n, std::size_t w_in, std::size_t m,
                                       std::size_t w_out) {
  std::set<std::string> masks;
  const auto rows = eligible_starts(m, w_out);
  const auto cols = eligible_starts(n, w_in);
  for (std::size_t sr = rows.first; sr <= rows.last; ++sr) {
    const auto rmask = sliceout_mask_equivalent(m, SliceSpec{m, w_out, sr});
    for (std::size_t sc = cols.first; sc <= cols.last; ++sc) {
      const auto cmask = sliceout_mask_equivalent(n, SliceSpec{n, w_in, sc});
      std::string key;
      key.reserve(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          key.push_back(rmask[i] && cmask[j] ? '1' : '0');
        }
      }
      masks.insert(std::move(key));
    }
  }
  return masks.size();
}

} // namespace detail

/// Instrumented sliced steps against the analytic cost model, plus mask
/// enumeration against the architecture count formulas.
inline std::vector<CountCheckCase> check_counts(std::uint64_t seed = 11) {
  using D = double;
  std::vector<CountCheckCase> cases;
  std::mt19937_64 rng(seed);

  auto run_dense = [&](std::size_t b, std::size_t n, std::size_t m, double p) {
    SliceScheme so;
    so.kind = SchemeKind::sliceout;
    so.rate = p;
    so.normalization = Normalization::probabilistic;
    auto layer = make_dense_layer<D>(rng, n, m, so, /*with_bias=*/false);
    const std::size_t w_in = slice_width(n, p);
    const std::size_t w_out = slice_width(m, p);
    layer.in_spec = SliceSpec{n, w_in, (n - w_in) / 2};
    layer.out_spec = SliceSpec{m, w_out, (m - w_out) / 3};
    Tensor<D> xv = Tensor<D>::zeros({b, w_in});
    fill_normal(xv, rng);
    auto x = leaf(std::move(xv), false);

    counters().reset_step();
    NodePtr<D> y = dense_sliceout_forward(x, layer, true);
    NodePtr<D> loss = sum_all(y);
    backward(loss);
    const CostReport cost = table1_costs(SchemeKind::sliceout, b, n, m, p);

    CountCheckCase c;
    c.name = "sliceout dense b=" + std::to_string(b) + " n=" + std::to_string(n) +
             " m=" + std::to_string(m) + " p=" + std::to_string(p);
    const bool mult_ok = counters().multiply_ops == cost.multiply_ops;
    const bool copy_ok = counters().copy_bytes_allocated == 0;
    const bool act_ok = y->value.size() == cost.activation_elements;
    c.pass = mult_ok && copy_ok && act_ok;
    c.detail = "multiplies " + std::to_string(counters().multiply_ops) + "/" +
               std::to_string(cost.multiply_ops) + ", copy bytes " +
               std::to_string(counters().copy_bytes_allocated) + ", activations " +
               std::to_string(y->value.size()) + "/" + std::to_string(cost.activation_elements);
    cases.push_back(c);
  };

  auto run_controlled = [&](std::size_t b, std::size_t n, std::size_t m, double p) {
    Tensor<D> wv = Tensor<D>::zeros({m, n});
    fill_normal(wv, rng);
    auto w = parameter(std::move(wv));
    const std::size_t w_in = slice_width(n, p);
    const std::size_t w_out = slice_width(m, p);
    auto rows = sample_keep_indices(rng, m, w_out);
    auto cols = sample_keep_indices(rng, n, w_in);
    Tensor<D> xv = Tensor<D>::zeros({b, w_in});
    fill_normal(xv, rng);
    auto x = leaf(std::move(xv), false);

    counters().reset_step();
    NodePtr<D> wg = controlled_gather(w, rows, cols);
    NodePtr<D> y = matmul_nt(x, wg);
    backward(sum_all(y));
    const CostReport cost = table1_costs(SchemeKind::controlled, b, n, m, p);

    CountCheckCase c;
    c.name = "controlled dense b=" + std::to_string(b) + " n=" + std::to_string(n) +
             " m=" + std::to_string(m) + " p=" + std::to_string(p);
    const std::uint64_t copied = counters().copy_bytes_allocated / sizeof(D);
    const bool copy_ok = copied == cost.extra_copy_elements;
    const bool mult_ok = counters().multiply_ops == cost.multiply_ops;
    const bool act_ok = y->value.size() == cost.activation_elements;
    c.pass = copy_ok && mult_ok && act_ok;
    c.detail = "copied elements " + std::to_string(copied) + "/" +
               std::to_string(cost.extra_copy_elements) + ", multiplies " +
               std::to_string(counters().multiply_ops) + "/" + std::to_string(cost.multiply_ops);
    cases.push_back(c);
  };

  run_dense(128, 1024, 1024, 0.5);
  run_dense(8, 48, 64, 0.3);
  run_controlled(128, 1024, 1024, 0.5);
  run_controlled(8, 48, 64, 0.3);

  auto run_masks = [&](std::size_t n, std::size_t w_in, std::size_t m, std::size_t w_out) {
    const std::uint64_t enumerated = detail::enumerate_distinct_masks<D>(n, w_in, m, w_out);
    const std::uint64_t expected =
        architecture_count(SliceSpec{n, w_in, 0}, SliceSpec{m, w_out, 0});
    CountCheckCase c;
    c.name = "distinct masks (" + std::to_string(n) + "," + std::to_string(w_in) + ")x(" +
             std::to_string(m) + "," + std::to_string(w_out) + ")";
    c.pass = enumerated == expected;
    c.detail = std::to_string(enumerated) + "/" + std::to_string(expected);
    cases.push_back(c);
  };

  auto run_single_mask = [&](std::size_t m, std::size_t w) {
    std::set<std::string> masks;
    const auto range = eligible_starts(m, w);
    for (std::size_t s = range.first; s <= range.last; ++s) {
      const auto mask = sliceout_mask_equivalent(m, SliceSpec{m, w, s});
      masks.insert(std::string(mask.begin(), mask.end()));
    }
    CountCheckCase c;
    c.name = "single-sided masks (" + std::to_string(m) + "," + std::to_string(w) + ")";
    c.pass = masks.size() == architecture_count(m, w);
    c.detail = std::to_string(masks.size()) + "/" + std::to_string(architecture_count(m, w));
    cases.push_back(c);
  };

  run_single_mask(10, 6);
  run_single_mask(16, 16);
  run_masks(10, 6, 8, 4);
  run_masks(12, 5, 12, 5);

  return cases;
}

} // namespace sliceout
