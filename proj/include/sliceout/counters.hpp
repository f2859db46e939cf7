// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>

namespace sliceout {

/// Logical per-thread instrumentation of tensor-op costs.
///
/// Counting is deterministic and happens at the op level: forward kernels
/// record multiply-accumulates, element accesses and buffer copies; the
/// activation gauge tracks transient per-step memory (forward activations
/// plus gradient buffers), while parameter and optimizer storage stay
/// outside it. Backward kernels do not add to the monotonic counters, so
/// the recorded multiply count of a layer is exactly its forward
/// weight-multiply cost.
struct InstrumentationCounters {
  std::uint64_t element_reads = 0;
  std::uint64_t element_writes = 0;
  std::uint64_t multiply_ops = 0;          // matmul/conv multiply-accumulates
  std::uint64_t copy_bytes_allocated = 0;  // gather-style weight copies
  std::int64_t live_activation_bytes = 0;
  std::uint64_t peak_activation_bytes = 0;

  void on_activation_alloc(std::size_t bytes) {
    live_activation_bytes += static_cast<std::int64_t>(bytes);
    peak_activation_bytes =
        std::max<std::uint64_t>(peak_activation_bytes,
                                static_cast<std::uint64_t>(live_activation_bytes));
  }

  void on_activation_release(std::size_t bytes) {
    live_activation_bytes -= static_cast<std::int64_t>(bytes);
  }

  /// Resets the monotonic counters at a step boundary. The live gauge is
  /// left alone (it reflects buffers that are still held); peak restarts
  /// from the current live value.
  void reset_step() {
    element_reads = 0;
    element_writes = 0;
    multiply_ops = 0;
    copy_bytes_allocated = 0;
    peak_activation_bytes =
        live_activation_bytes > 0 ? static_cast<std::uint64_t>(live_activation_bytes) : 0;
  }
};

inline InstrumentationCounters& counters() {
  thread_local InstrumentationCounters c;
  return c;
}

} // namespace sliceout
