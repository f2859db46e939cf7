// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sliceout/autodiff.hpp"

namespace sliceout {

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences and returns the worst relative error
/// |analytic - cd| / (|analytic| + |cd| + 1e-12) over all input elements.
///
/// The function must be deterministic; it is re-evaluated two times per
/// element under a no-grad guard.
template <typename T = double>
double grad_check(const std::function<NodePtr<T>(const std::vector<NodePtr<T>>&)>& f,
                  const std::vector<NodePtr<T>>& inputs, double epsilon = 1e-5) {
  if (epsilon < 1e-7 || epsilon > 1e-4) {
    throw usage_error("grad_check: epsilon must lie in [1e-7, 1e-4]");
  }
  for (const auto& in : inputs) in->release_grad();
  NodePtr<T> out = f(inputs);
  if (out->value.size() != 1) throw usage_error("grad_check: function must return a scalar");
  backward(out);

  std::vector<Tensor<T>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& in : inputs) {
    analytic.push_back(in->grad.defined() ? in->grad.clone()
                                          : Tensor<T>::zeros(in->value.shape()));
    in->release_grad();
  }
  out.reset();

  auto eval = [&]() -> double {
    NoGradGuard guard;
    NodePtr<T> y = f(inputs);
    return static_cast<double>(y->value(std::size_t{0}));
  };

  double worst = 0.0;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    Tensor<T>& x = inputs[which]->value;
    const Tensor<T>& g = analytic[which];
    std::vector<std::size_t> ix(x.rank(), 0);
    for (std::size_t n = 0; n < x.size(); ++n) {
      T saved = x.at(ix);
      x.at(ix) = saved + static_cast<T>(epsilon);
      const double fplus = eval();
      x.at(ix) = saved - static_cast<T>(epsilon);
      const double fminus = eval();
      x.at(ix) = saved;
      const double cd = (fplus - fminus) / (2.0 * epsilon);
      const double an = static_cast<double>(g.at(ix));
      if (!std::isfinite(cd) || !std::isfinite(an)) {
        throw numeric_error("grad_check: non-finite value encountered");
      }
      const double rel = std::abs(an - cd) / (std::abs(an) + std::abs(cd) + 1e-12);
      worst = std::max(worst, rel);
      // row-major advance
      for (std::size_t i = ix.size(); i-- > 0;) {
        if (++ix[i] < x.shape(i)) break;
        ix[i] = 0;
      }
    }
  }
  return worst;
}

} // namespace sliceout
