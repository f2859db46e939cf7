// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "sliceout/autodiff.hpp"
#include "sliceout/errors.hpp"

namespace sliceout {

/// One sampled contiguous keep-range on a layer axis of width m: the units
/// [start, start + width) stay, everybody else is dropped for the step.
struct SliceSpec {
  std::size_t layer_width = 0;  // m
  std::size_t width = 0;        // w
  std::size_t start = 0;        // s, with s + w <= m

  bool covers(std::size_t j) const { return j >= start && j < start + width; }
  bool full() const { return width == layer_width; }

  friend bool operator==(const SliceSpec& a, const SliceSpec& b) {
    return a.layer_width == b.layer_width && a.width == b.width && a.start == b.start;
  }
  friend bool operator!=(const SliceSpec& a, const SliceSpec& b) { return !(a == b); }
};

enum class SchemeKind { none, standard, controlled, sliceout };

enum class Normalization { flow, probabilistic };

/// Dropout scheme configuration. `normalization` and `delayed` only apply
/// when kind == sliceout; rate 0 behaves identically to `none`.
struct SliceScheme {
  SchemeKind kind = SchemeKind::none;
  double rate = 0.0;
  Normalization normalization = Normalization::probabilistic;
  bool delayed = false;
  std::uint64_t seed = 0;

  bool active() const { return kind != SchemeKind::none && rate > 0.0; }
};

inline std::string to_string(SchemeKind k) {
  switch (k) {
    case SchemeKind::none: return "none";
    case SchemeKind::standard: return "standard";
    case SchemeKind::controlled: return "controlled";
    case SchemeKind::sliceout: return "sliceout";
  }
  return "?";
}

inline std::string to_string(Normalization n) {
  return n == Normalization::flow ? "flow" : "probabilistic";
}

/// Number of kept units for layer width m at dropout rate p:
/// max(1, round(m * (1 - p))), rounding half away from zero. The width is
/// a function of (m, p) only, so tensor shapes stay fixed across steps.
inline std::size_t slice_width(std::size_t m, double p) {
  if (p < 0.0 || p >= 1.0) throw rate_error("slice_width: rate must lie in [0, 1)");
  if (m == 0) throw width_error("slice_width: layer width must be positive");
  const double kept = std::round(static_cast<double>(m) * (1.0 - p));
  std::size_t w = kept < 1.0 ? 1 : static_cast<std::size_t>(kept);
  if (w > m) w = m;
  return w;
}

/// slice_width plus the extreme-rate warning emitted when a layer is set
/// up. Rates this high only ensemble under-capacitated slices.
inline std::size_t slice_width_for_layer(std::size_t m, double p) {
  const std::size_t w = slice_width(m, p);
  if (p >= 0.9) {
    std::cerr << "[sliceout] warning: rate " << p << " keeps only " << w << " of " << m
              << " units\n";
  }
  return w;
}

/// Start positions satisfying start + width <= m. Inclusive range.
struct StartRange {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t count() const { return last - first + 1; }
};

inline StartRange eligible_starts(std::size_t m, std::size_t w) {
  if (w < 1 || w > m) throw width_error("eligible_starts: need 1 <= w <= m");
  return StartRange{0, m - w};
}

template <typename Rng>
SliceSpec sample_slice(Rng& rng, std::size_t m, std::size_t w) {
  const StartRange range = eligible_starts(m, w);
  std::size_t start = range.first;
  if (range.count() > 1) {
    std::uniform_int_distribution<std::size_t> dist(range.first, range.last);
    start = dist(rng);
  }
  return SliceSpec{m, w, start};
}

/// Probability that unit j survives a uniformly sampled slice:
/// (min(j, m-w) - max(0, j-w+1) + 1) / (m-w+1).
inline double keep_probability(std::size_t j, std::size_t m, std::size_t w) {
  if (j >= m) throw index_error("keep_probability: unit index out of range");
  const StartRange range = eligible_starts(m, w);
  const std::size_t lo = j + 1 >= w ? j + 1 - w : 0;         // max(0, j - w + 1)
  const std::size_t hi = std::min(j, m - w);                  // min(j, m - w)
  const std::size_t covering = hi - lo + 1;
  return static_cast<double>(covering) / static_cast<double>(range.count());
}

/// Per-unit keep probabilities induced by uniform slice sampling, kept in
/// exact integral form (covering-start counts over m-w+1 starts) next to
/// the double-precision probability and reciprocal vectors.
struct KeepProfile {
  std::size_t layer_width = 0;
  std::size_t slice_width = 0;
  std::size_t start_count = 0;
  std::vector<std::uint64_t> coverage;   // # eligible starts covering unit j
  std::vector<double> probability;       // coverage[j] / start_count
  std::vector<double> reciprocal;        // start_count / coverage[j]

  /// Global indices [m-w, w-1] where every eligible slice keeps the unit
  /// (nonempty whenever w >= m/2, i.e. rates at or below one half).
  bool in_middle_band(std::size_t j) const {
    return slice_width + j >= layer_width && j + 1 <= slice_width;
  }
};

inline KeepProfile build_keep_profile(std::size_t m, std::size_t w) {
  const StartRange range = eligible_starts(m, w);
  KeepProfile p;
  p.layer_width = m;
  p.slice_width = w;
  p.start_count = range.count();
  p.coverage.resize(m);
  p.probability.resize(m);
  p.reciprocal.resize(m);
  std::uint64_t total = 0;
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t lo = j + 1 >= w ? j + 1 - w : 0;
    const std::size_t hi = std::min(j, m - w);
    p.coverage[j] = hi - lo + 1;
    total += p.coverage[j];
    p.probability[j] = static_cast<double>(p.coverage[j]) / static_cast<double>(p.start_count);
    p.reciprocal[j] = static_cast<double>(p.start_count) / static_cast<double>(p.coverage[j]);
  }
  // Conservation and symmetry hold by construction; a violation means the
  // closed form above has been broken.
  if (total != static_cast<std::uint64_t>(w) * p.start_count) {
    throw numeric_error("keep profile: coverage does not sum to w * (m - w + 1)");
  }
  for (std::size_t j = 0; j < m / 2; ++j) {
    if (p.coverage[j] != p.coverage[m - 1 - j]) {
      throw numeric_error("keep profile: coverage is not symmetric");
    }
  }
  if (2 * w >= m) {
    for (std::size_t j = m - w; j + 1 <= w; ++j) {
      if (p.coverage[j] != p.start_count) {
        throw numeric_error("keep profile: middle band must be kept by every slice");
      }
    }
  }
  return p;
}

/// Flow normalisation factor: full width over slice width, the inverse
/// of the expected proportion of kept units.
inline double flow_norm_factor(std::size_t m, std::size_t w) {
  const StartRange range = eligible_starts(m, w);
  (void)range;
  return static_cast<double>(m) / static_cast<double>(w);
}

/// Inverted standard dropout on activations (per-unit Bernoulli masks,
/// kept units scaled by 1/(1-p), zeros stay in memory).
template <typename T, typename Rng>
NodePtr<T> apply_standard_dropout(const NodePtr<T>& x, double p, Rng& rng) {
  return dropout(x, p, rng);
}

/// Controlled-dropout gather: copies the kept row/column grid of a weight
/// matrix into freshly allocated memory. See gather2d for the counter
/// contract.
template <typename T>
NodePtr<T> controlled_gather(const NodePtr<T>& w, std::vector<std::size_t> keep_rows,
                             std::vector<std::size_t> keep_cols) {
  return gather2d(w, std::move(keep_rows), std::move(keep_cols));
}

/// The 0/1 mask a slice is equivalent to. Verification only; the fast
/// path never materialises it.
inline std::vector<std::uint8_t> sliceout_mask_equivalent(std::size_t m, const SliceSpec& spec) {
  if (spec.layer_width != m || spec.start + spec.width > m || spec.width < 1) {
    throw bounds_error("sliceout_mask_equivalent: spec does not fit layer");
  }
  std::vector<std::uint8_t> mask(m, 0);
  for (std::size_t j = spec.start; j < spec.start + spec.width; ++j) mask[j] = 1;
  return mask;
}

/// Sorted uniform random subset of size w out of m (controlled dropout's
/// kept-unit index set).
template <typename Rng>
std::vector<std::size_t> sample_keep_indices(Rng& rng, std::size_t m, std::size_t w) {
  if (w < 1 || w > m) throw width_error("sample_keep_indices: need 1 <= w <= m");
  // Floyd's algorithm, then sort.
  std::vector<std::uint8_t> chosen(m, 0);
  std::vector<std::size_t> out;
  out.reserve(w);
  for (std::size_t i = m - w; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> dist(0, i);
    std::size_t t = dist(rng);
    if (chosen[t]) t = i;
    chosen[t] = 1;
    out.push_back(t);
  }
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace sliceout
