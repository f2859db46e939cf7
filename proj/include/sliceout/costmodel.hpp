// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "sliceout/errors.hpp"
#include "sliceout/slicing.hpp"

namespace sliceout {

/// Analytic per-step costs of one fully connected layer (n inputs, m
/// outputs, batch b) under each dropout scheme. The (1-p)^2 terms are
/// computed from the actual slice widths w_in * w_out rather than the
/// rate, so instrumented runs can be matched exactly; asymptotic entries
/// are reported as exact element counts.
struct CostReport {
  SchemeKind scheme = SchemeKind::none;
  std::size_t batch = 0;
  std::size_t in_width = 0;   // n
  std::size_t out_width = 0;  // m
  double rate = 0.0;
  std::uint64_t weight_manipulation_rw = 0;  // extra reads/writes on weights
  std::uint64_t extra_copy_elements = 0;     // duplicated weight elements
  std::uint64_t multiply_ops = 0;            // weight-multiply MACs
  std::uint64_t activation_elements = 0;     // output activation tensor size
};

inline CostReport table1_costs(SchemeKind scheme, std::size_t b, std::size_t n, std::size_t m,
                               double p) {
  if (p < 0.0 || p >= 1.0) throw rate_error("table1_costs: rate must lie in [0, 1)");
  if (b == 0 || n == 0 || m == 0) throw rate_error("table1_costs: b, n, m must be positive");
  CostReport r;
  r.scheme = scheme;
  r.batch = b;
  r.in_width = n;
  r.out_width = m;
  r.rate = scheme == SchemeKind::none ? 0.0 : p;

  const double eff = r.rate;
  const std::uint64_t w_in = slice_width(n, eff);
  const std::uint64_t w_out = slice_width(m, eff);
  const std::uint64_t full_mult = static_cast<std::uint64_t>(b) * n * m;
  const std::uint64_t sliced_mult = static_cast<std::uint64_t>(b) * w_in * w_out;

  // Rate zero deactivates every scheme; it behaves exactly like `none`.
  const SchemeKind effective = eff == 0.0 ? SchemeKind::none : scheme;
  switch (effective) {
    case SchemeKind::none:
    case SchemeKind::standard:
      r.weight_manipulation_rw = 0;
      r.extra_copy_elements = 0;
      r.multiply_ops = full_mult;
      r.activation_elements = static_cast<std::uint64_t>(m) * b;
      break;
    case SchemeKind::controlled:
      r.weight_manipulation_rw = w_in * w_out;
      r.extra_copy_elements = w_in * w_out;
      r.multiply_ops = sliced_mult;
      r.activation_elements = w_out * b;
      break;
    case SchemeKind::sliceout:
      // One view per step; O(1) weight manipulation reported as zero.
      r.weight_manipulation_rw = 0;
      r.extra_copy_elements = 0;
      r.multiply_ops = sliced_mult;
      r.activation_elements = w_out * b;
      break;
  }
  return r;
}

enum class Co2Mode { fewer_machines, bigger_batch, plain_speedup };

inline std::string to_string(Co2Mode m) {
  switch (m) {
    case Co2Mode::fewer_machines: return "fewer-machines";
    case Co2Mode::bigger_batch: return "bigger-batch";
    case Co2Mode::plain_speedup: return "plain-speedup";
  }
  return "?";
}

struct Co2Inputs {
  double speedup_fraction = 0.0;      // relative train-time reduction
  double memory_gain_fraction = 0.0;  // relative peak-memory reduction
  std::size_t machine_pool = 4;       // machines used by the baseline
};

/// Emission-saving fraction for the three accounting modes: dropping whole
/// machines the memory gain frees up, or banking the measured speedup
/// directly (with or without a batch-size increase).
inline double co2_savings(Co2Mode mode, const Co2Inputs& in) {
  if (in.speedup_fraction < 0.0 || in.speedup_fraction >= 1.0 || in.memory_gain_fraction < 0.0 ||
      in.memory_gain_fraction >= 1.0) {
    throw rate_error("co2_savings: fractions must lie in [0, 1)");
  }
  switch (mode) {
    case Co2Mode::fewer_machines: {
      if (in.machine_pool == 0) throw rate_error("co2_savings: machine pool must be positive");
      const double scaled =
          std::floor(static_cast<double>(in.machine_pool) * (1.0 - in.memory_gain_fraction));
      const std::size_t needed = std::max<std::size_t>(1, static_cast<std::size_t>(scaled));
      return static_cast<double>(in.machine_pool - needed) /
             static_cast<double>(in.machine_pool);
    }
    case Co2Mode::bigger_batch:
    case Co2Mode::plain_speedup:
      return in.speedup_fraction;
  }
  throw rate_error("co2_savings: unknown mode");
}

} // namespace sliceout
