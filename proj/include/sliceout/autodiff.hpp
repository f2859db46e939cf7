// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sliceout/counters.hpp"
#include "sliceout/errors.hpp"
#include "sliceout/tensor.hpp"

namespace sliceout {

/// Reverse-mode autodiff over Tensor values.
///
/// Nodes form a DAG from outputs to inputs; `backward` walks it in reverse
/// topological order exactly once. Forward ops record their logical cost
/// in the thread counters; backward kernels are free of counter updates so
/// per-step multiply counts reflect only forward weight multiplies.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;
  // View nodes alias their parent's gradient region instead of owning a
  // buffer, so sliced weight gradients accumulate in place.
  std::function<Tensor<T>()> grad_alias;
  const char* op = "leaf";
  bool requires_grad = false;
  bool is_parameter = false;

  Tensor<T>& ensure_grad() {
    if (!grad.defined()) {
      grad = grad_alias ? grad_alias() : Tensor<T>::zeros(value.shape(), Alloc::activation);
    }
    return grad;
  }

  void release_grad() { grad = Tensor<T>(); }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

inline bool& autograd_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph construction in a scope (evaluation passes).
struct NoGradGuard {
  NoGradGuard() : prev_(autograd_enabled()) { autograd_enabled() = false; }
  ~NoGradGuard() { autograd_enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool prev_;
};

template <typename T>
NodePtr<T> leaf(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <typename T>
NodePtr<T> parameter(Tensor<T> value) {
  auto n = leaf(std::move(value), true);
  n->is_parameter = true;
  return n;
}

namespace detail {

template <typename T>
NodePtr<T> make_op(const char* op, Tensor<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = op;
  bool needs = false;
  if (autograd_enabled()) {
    for (const auto& p : parents) {
      if (p && p->requires_grad) {
        needs = true;
        break;
      }
    }
  }
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

/// dst += src, elementwise, shapes equal. Fast path for contiguous pairs.
template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.shape() != src.shape()) throw shape_error("add_into: shape mismatch");
  if (dst.is_contiguous() && src.is_contiguous()) {
    T* d = dst.data();
    const T* s = src.data();
    for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
    return;
  }
  src.for_each([&](const std::vector<std::size_t>& idx, const T& v) { dst.at(idx) += v; });
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* what) {
  if (t.rank() != 2) throw shape_error(std::string(what) + ": expected a 2-D tensor");
  if (t.stride(1) != 1) throw shape_error(std::string(what) + ": inner stride must be 1");
}

// C(m,n) (+)= A(m,k) * B(k,n)
template <typename T>
void gemm_nn(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c, bool accumulate) {
  require_matrix(a, "gemm_nn/a");
  require_matrix(b, "gemm_nn/b");
  require_matrix(c, "gemm_nn/c");
  const std::size_t m = a.shape(0), k = a.shape(1), n = b.shape(1);
  if (b.shape(0) != k || c.shape(0) != m || c.shape(1) != n) {
    throw shape_error("gemm_nn: incompatible shapes");
  }
  const T* ad = a.data();
  const T* bd = b.data();
  T* cd = c.data();
  const std::ptrdiff_t as = a.stride(0), bs = b.stride(0), cs = c.stride(0);
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = cd + static_cast<std::ptrdiff_t>(i) * cs;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    }
    const T* arow = ad + static_cast<std::ptrdiff_t>(i) * as;
    for (std::size_t l = 0; l < k; ++l) {
      const T av = arow[l];
      const T* brow = bd + static_cast<std::ptrdiff_t>(l) * bs;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m,n) (+)= A(m,k) * B(n,k)^T
template <typename T>
void gemm_nt(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c, bool accumulate) {
  require_matrix(a, "gemm_nt/a");
  require_matrix(b, "gemm_nt/b");
  require_matrix(c, "gemm_nt/c");
  const std::size_t m = a.shape(0), k = a.shape(1), n = b.shape(0);
  if (b.shape(1) != k || c.shape(0) != m || c.shape(1) != n) {
    throw shape_error("gemm_nt: incompatible shapes");
  }
  const T* ad = a.data();
  const T* bd = b.data();
  T* cd = c.data();
  const std::ptrdiff_t as = a.stride(0), bs = b.stride(0), cs = c.stride(0);
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = ad + static_cast<std::ptrdiff_t>(i) * as;
    T* crow = cd + static_cast<std::ptrdiff_t>(i) * cs;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = bd + static_cast<std::ptrdiff_t>(j) * bs;
      T acc = T(0);
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

// C(m,n) (+)= A(k,m)^T * B(k,n)
template <typename T>
void gemm_tn(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c, bool accumulate) {
  require_matrix(a, "gemm_tn/a");
  require_matrix(b, "gemm_tn/b");
  require_matrix(c, "gemm_tn/c");
  const std::size_t k = a.shape(0), m = a.shape(1), n = b.shape(1);
  if (b.shape(0) != k || c.shape(0) != m || c.shape(1) != n) {
    throw shape_error("gemm_tn: incompatible shapes");
  }
  const T* ad = a.data();
  const T* bd = b.data();
  T* cd = c.data();
  const std::ptrdiff_t as = a.stride(0), bs = b.stride(0), cs = c.stride(0);
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = cd + static_cast<std::ptrdiff_t>(i) * cs;
      for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    }
  }
  for (std::size_t l = 0; l < k; ++l) {
    const T* arow = ad + static_cast<std::ptrdiff_t>(l) * as;
    const T* brow = bd + static_cast<std::ptrdiff_t>(l) * bs;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = cd + static_cast<std::ptrdiff_t>(i) * cs;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

} // namespace detail

/// Runs reverse-mode accumulation from a scalar root.
template <typename T>
void backward(const NodePtr<T>& root) {
  if (!root) throw usage_error("backward: null root");
  if (root->value.size() != 1) throw usage_error("backward requires a scalar root");
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p != nullptr && p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---------------------------------------------------------------------------
// Graph ops
// ---------------------------------------------------------------------------

/// Zero-copy slice along one axis. The node's gradient is itself a view
/// into the matching region of the parent's dense gradient buffer, so
/// accumulation lands in place and everything outside the slice stays
/// exactly zero.
template <typename T>
NodePtr<T> slice_view(const NodePtr<T>& x, std::size_t axis, std::size_t start,
                      std::size_t width) {
  Tensor<T> v = x->value.slice_view(axis, start, width);
  auto node = detail::make_op<T>("slice_view", std::move(v), {x}, nullptr);
  if (node->requires_grad && x->requires_grad) {
    node->grad_alias = [x, axis, start, width]() {
      return x->ensure_grad().slice_view(axis, start, width);
    };
  }
  return node;
}

template <typename T>
NodePtr<T> reshape(const NodePtr<T>& x, std::vector<std::size_t> shape) {
  Tensor<T> v = x->value.reshape(shape);
  auto node = detail::make_op<T>("reshape", std::move(v), {x}, nullptr);
  if (node->requires_grad && x->requires_grad) {
    auto view_shape = node->value.shape();
    node->grad_alias = [x, view_shape]() { return x->ensure_grad().reshape(view_shape); };
  }
  return node;
}

/// y = a * b for 2-D operands.
template <typename T>
NodePtr<T> matmul(const NodePtr<T>& a, const NodePtr<T>& b) {
  detail::require_matrix(a->value, "matmul/a");
  detail::require_matrix(b->value, "matmul/b");
  if (a->value.shape(1) != b->value.shape(0)) {
    throw shape_error("matmul: inner dimensions disagree");
  }
  const std::size_t p = a->value.shape(0), q = a->value.shape(1), r = b->value.shape(1);
  Tensor<T> y = Tensor<T>::zeros({p, r}, Alloc::activation);
  detail::gemm_nn(a->value, b->value, y, false);
  auto& c = counters();
  c.multiply_ops += static_cast<std::uint64_t>(p) * q * r;
  c.element_reads += 2ull * p * q * r;
  c.element_writes += static_cast<std::uint64_t>(p) * r;
  return detail::make_op<T>("matmul", std::move(y), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) detail::gemm_nt(self.grad, b->value, a->ensure_grad(), true);
    if (b->requires_grad) detail::gemm_tn(a->value, self.grad, b->ensure_grad(), true);
  });
}

/// y = a * b^T; the form dense layers and attention scores use.
template <typename T>
NodePtr<T> matmul_nt(const NodePtr<T>& a, const NodePtr<T>& b) {
  detail::require_matrix(a->value, "matmul_nt/a");
  detail::require_matrix(b->value, "matmul_nt/b");
  if (a->value.shape(1) != b->value.shape(1)) {
    throw shape_error("matmul_nt: inner dimensions disagree");
  }
  const std::size_t p = a->value.shape(0), q = a->value.shape(1), r = b->value.shape(0);
  Tensor<T> y = Tensor<T>::zeros({p, r}, Alloc::activation);
  detail::gemm_nt(a->value, b->value, y, false);
  auto& c = counters();
  c.multiply_ops += static_cast<std::uint64_t>(p) * q * r;
  c.element_reads += 2ull * p * q * r;
  c.element_writes += static_cast<std::uint64_t>(p) * r;
  return detail::make_op<T>("matmul_nt", std::move(y), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) detail::gemm_nn(self.grad, b->value, a->ensure_grad(), true);
    if (b->requires_grad) detail::gemm_tn(self.grad, a->value, b->ensure_grad(), true);
  });
}

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
  if (a->value.shape() != b->value.shape()) throw shape_error("add: shape mismatch");
  Tensor<T> y = Tensor<T>::zeros(a->value.shape(), Alloc::activation);
  detail::add_into(y, a->value);
  detail::add_into(y, b->value);
  auto& c = counters();
  c.element_reads += 2ull * y.size();
  c.element_writes += y.size();
  return detail::make_op<T>("add", std::move(y), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) detail::add_into(a->ensure_grad(), self.grad);
    if (b->requires_grad) detail::add_into(b->ensure_grad(), self.grad);
  });
}

/// y[i, j] = x[i, j] + v[j]
template <typename T>
NodePtr<T> add_rowvec(const NodePtr<T>& x, const NodePtr<T>& v) {
  detail::require_matrix(x->value, "add_rowvec/x");
  if (v->value.rank() != 1 || v->value.shape(0) != x->value.shape(1)) {
    throw shape_error("add_rowvec: vector length mismatch");
  }
  const std::size_t rows = x->value.shape(0), cols = x->value.shape(1);
  Tensor<T> y = Tensor<T>::zeros({rows, cols}, Alloc::activation);
  {
    const T* xd = x->value.data();
    const std::ptrdiff_t xs = x->value.stride(0);
    const T* vd = v->value.data();
    const std::ptrdiff_t vs = v->value.stride(0);
    T* yd = y.data();
    for (std::size_t i = 0; i < rows; ++i) {
      const T* xr = xd + static_cast<std::ptrdiff_t>(i) * xs;
      T* yr = yd + i * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        yr[j] = xr[j] + vd[static_cast<std::ptrdiff_t>(j) * vs];
      }
    }
  }
  auto& c = counters();
  c.element_reads += 2ull * rows * cols;
  c.element_writes += static_cast<std::uint64_t>(rows) * cols;
  return detail::make_op<T>("add_rowvec", std::move(y), {x, v}, [x, v, rows, cols](Node<T>& self) {
    if (x->requires_grad) detail::add_into(x->ensure_grad(), self.grad);
    if (v->requires_grad) {
      Tensor<T>& vg = v->ensure_grad();
      T* vd = vg.data();
      const std::ptrdiff_t vs = vg.stride(0);
      const T* gd = self.grad.data();
      for (std::size_t i = 0; i < rows; ++i) {
        const T* gr = gd + i * cols;
        for (std::size_t j = 0; j < cols; ++j) vd[static_cast<std::ptrdiff_t>(j) * vs] += gr[j];
      }
    }
  });
}

template <typename T>
NodePtr<T> mul_scalar(const NodePtr<T>& x, T factor) {
  Tensor<T> y = Tensor<T>::zeros(x->value.shape(), Alloc::activation);
  if (x->value.is_contiguous()) {
    const T* xd = x->value.data();
    T* yd = y.data();
    for (std::size_t i = 0, n = y.size(); i < n; ++i) yd[i] = xd[i] * factor;
  } else {
    x->value.for_each([&](const std::vector<std::size_t>& ix, const T& v) { y.at(ix) = v * factor; });
  }
  auto& c = counters();
  c.element_reads += y.size();
  c.element_writes += y.size();
  return detail::make_op<T>("mul_scalar", std::move(y), {x}, [x, factor](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& xg = x->ensure_grad();
    if (xg.is_contiguous() && self.grad.is_contiguous()) {
      T* d = xg.data();
      const T* g = self.grad.data();
      for (std::size_t i = 0, n = xg.size(); i < n; ++i) d[i] += g[i] * factor;
    } else {
      self.grad.for_each(
          [&](const std::vector<std::size_t>& ix, const T& v) { xg.at(ix) += v * factor; });
    }
  });
}

/// y[i, j] = x[i, j] * factors[j]; factors are constants (keep-profile
/// reciprocals), not graph nodes.
template <typename T>
NodePtr<T> scale_columns(const NodePtr<T>& x, std::vector<T> factors) {
  detail::require_matrix(x->value, "scale_columns/x");
  const std::size_t rows = x->value.shape(0), cols = x->value.shape(1);
  if (factors.size() != cols) throw shape_error("scale_columns: factor count mismatch");
  Tensor<T> y = Tensor<T>::zeros({rows, cols}, Alloc::activation);
  {
    const T* xd = x->value.data();
    const std::ptrdiff_t xs = x->value.stride(0);
    T* yd = y.data();
    for (std::size_t i = 0; i < rows; ++i) {
      const T* xr = xd + static_cast<std::ptrdiff_t>(i) * xs;
      T* yr = yd + i * cols;
      for (std::size_t j = 0; j < cols; ++j) yr[j] = xr[j] * factors[j];
    }
  }
  auto& c = counters();
  c.element_reads += static_cast<std::uint64_t>(rows) * cols;
  c.element_writes += static_cast<std::uint64_t>(rows) * cols;
  return detail::make_op<T>("scale_columns", std::move(y), {x},
                            [x, factors = std::move(factors), rows, cols](Node<T>& self) {
                              if (!x->requires_grad) return;
                              Tensor<T>& xg = x->ensure_grad();
                              const T* gd = self.grad.data();
                              T* xd = xg.data();
                              const std::ptrdiff_t xs = xg.stride(0);
                              for (std::size_t i = 0; i < rows; ++i) {
                                const T* gr = gd + i * cols;
                                T* xr = xd + static_cast<std::ptrdiff_t>(i) * xs;
                                for (std::size_t j = 0; j < cols; ++j) xr[j] += gr[j] * factors[j];
                              }
                            });
}

/// Per-channel scaling of an NCHW tensor by constant factors.
template <typename T>
NodePtr<T> scale_channels(const NodePtr<T>& x, std::vector<T> factors) {
  if (x->value.rank() != 4) throw shape_error("scale_channels: expected NCHW");
  const std::size_t C = x->value.shape(1);
  if (factors.size() != C) throw shape_error("scale_channels: factor count mismatch");
  Tensor<T> y = Tensor<T>::zeros(x->value.shape(), Alloc::activation);
  x->value.for_each(
      [&](const std::vector<std::size_t>& ix, const T& v) { y.at(ix) = v * factors[ix[1]]; });
  auto& c = counters();
  c.element_reads += y.size();
  c.element_writes += y.size();
  return detail::make_op<T>("scale_channels", std::move(y), {x}, [x, factors = std::move(factors)](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& xg = x->ensure_grad();
    self.grad.for_each([&](const std::vector<std::size_t>& ix, const T& v) {
      xg.at(ix) += v * factors[ix[1]];
    });
  });
}

template <typename T>
NodePtr<T> relu(const NodePtr<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x->value.shape(), Alloc::activation);
  if (x->value.is_contiguous()) {
    const T* xd = x->value.data();
    T* yd = y.data();
    for (std::size_t i = 0, n = y.size(); i < n; ++i) yd[i] = xd[i] > T(0) ? xd[i] : T(0);
  } else {
    x->value.for_each(
        [&](const std::vector<std::size_t>& ix, const T& v) { y.at(ix) = v > T(0) ? v : T(0); });
  }
  auto& c = counters();
  c.element_reads += y.size();
  c.element_writes += y.size();
  return detail::make_op<T>("relu", std::move(y), {x}, [x](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& xg = x->ensure_grad();
    if (xg.is_contiguous() && x->value.is_contiguous() && self.grad.is_contiguous()) {
      T* d = xg.data();
      const T* xv = x->value.data();
      const T* g = self.grad.data();
      for (std::size_t i = 0, n = xg.size(); i < n; ++i) {
        if (xv[i] > T(0)) d[i] += g[i];
      }
    } else {
      self.grad.for_each([&](const std::vector<std::size_t>& ix, const T& v) {
        if (x->value.at(ix) > T(0)) xg.at(ix) += v;
      });
    }
  });
}

/// Softmax over rows (axis = 1) or columns (axis = 0) of a 2-D tensor.
template <typename T>
NodePtr<T> softmax(const NodePtr<T>& x, std::size_t axis = 1) {
  if (x->value.rank() != 2) throw shape_error("softmax: expected a 2-D tensor");
  if (axis > 1) throw axis_error("softmax: axis out of range");
  const std::size_t rows = x->value.shape(0), cols = x->value.shape(1);
  Tensor<T> y = Tensor<T>::zeros({rows, cols}, Alloc::activation);
  const std::size_t outer = axis == 1 ? rows : cols;
  const std::size_t inner = axis == 1 ? cols : rows;
  auto in_at = [&](std::size_t o, std::size_t i) -> T {
    return axis == 1 ? x->value(o, i) : x->value(i, o);
  };
  auto out_at = [&](std::size_t o, std::size_t i) -> T& {
    return axis == 1 ? y(o, i) : y(i, o);
  };
  for (std::size_t o = 0; o < outer; ++o) {
    T mx = in_at(o, 0);
    for (std::size_t i = 1; i < inner; ++i) mx = std::max(mx, in_at(o, i));
    T sum = T(0);
    for (std::size_t i = 0; i < inner; ++i) {
      T e = std::exp(in_at(o, i) - mx);
      out_at(o, i) = e;
      sum += e;
    }
    for (std::size_t i = 0; i < inner; ++i) out_at(o, i) /= sum;
  }
  auto& c = counters();
  c.element_reads += 2ull * rows * cols;
  c.element_writes += static_cast<std::uint64_t>(rows) * cols;
  return detail::make_op<T>("softmax", std::move(y), {x}, [x, axis, outer, inner](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& xg = x->ensure_grad();
    auto yv = [&](std::size_t o, std::size_t i) -> T {
      return axis == 1 ? self.value(o, i) : self.value(i, o);
    };
    auto gv = [&](std::size_t o, std::size_t i) -> T {
      return axis == 1 ? self.grad(o, i) : self.grad(i, o);
    };
    for (std::size_t o = 0; o < outer; ++o) {
      T dot = T(0);
      for (std::size_t i = 0; i < inner; ++i) dot += gv(o, i) * yv(o, i);
      for (std::size_t i = 0; i < inner; ++i) {
        T delta = yv(o, i) * (gv(o, i) - dot);
        if (axis == 1) {
          xg(o, i) += delta;
        } else {
          xg(i, o) += delta;
        }
      }
    }
  });
}

/// Row-wise standardisation without affine parameters.
template <typename T>
NodePtr<T> layer_norm(const NodePtr<T>& x, T eps = T(1e-5)) {
  detail::require_matrix(x->value, "layer_norm/x");
  const std::size_t rows = x->value.shape(0), cols = x->value.shape(1);
  Tensor<T> y = Tensor<T>::zeros({rows, cols}, Alloc::activation);
  std::vector<T> inv_sigma(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    T mean = T(0);
    for (std::size_t j = 0; j < cols; ++j) mean += x->value(i, j);
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      T d = x->value(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    T is = T(1) / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (std::size_t j = 0; j < cols; ++j) y(i, j) = (x->value(i, j) - mean) * is;
  }
  auto& c = counters();
  c.element_reads += 3ull * rows * cols;
  c.element_writes += static_cast<std::uint64_t>(rows) * cols;
  return detail::make_op<T>("layer_norm", std::move(y), {x},
                            [x, inv_sigma = std::move(inv_sigma), rows, cols](Node<T>& self) {
                              if (!x->requires_grad) return;
                              Tensor<T>& xg = x->ensure_grad();
                              for (std::size_t i = 0; i < rows; ++i) {
                                T gmean = T(0), gymean = T(0);
                                for (std::size_t j = 0; j < cols; ++j) {
                                  gmean += self.grad(i, j);
                                  gymean += self.grad(i, j) * self.value(i, j);
                                }
                                gmean /= static_cast<T>(cols);
                                gymean /= static_cast<T>(cols);
                                for (std::size_t j = 0; j < cols; ++j) {
                                  xg(i, j) += inv_sigma[i] * (self.grad(i, j) - gmean -
                                                              self.value(i, j) * gymean);
                                }
                              }
                            });
}

/// Mean cross-entropy between logits and integer class labels.
template <typename T>
NodePtr<T> cross_entropy(const NodePtr<T>& logits, std::vector<int> labels) {
  detail::require_matrix(logits->value, "cross_entropy/logits");
  const std::size_t rows = logits->value.shape(0), cols = logits->value.shape(1);
  if (labels.size() != rows) throw shape_error("cross_entropy: one label per row required");
  for (int lbl : labels) {
    if (lbl < 0 || static_cast<std::size_t>(lbl) >= cols) {
      throw label_error("cross_entropy: label " + std::to_string(lbl) + " outside [0, " +
                        std::to_string(cols) + ")");
    }
  }
  T loss = T(0);
  for (std::size_t i = 0; i < rows; ++i) {
    T mx = logits->value(i, 0);
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, logits->value(i, j));
    T sum = T(0);
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(logits->value(i, j) - mx);
    const T lse = mx + std::log(sum);
    loss += lse - logits->value(i, static_cast<std::size_t>(labels[i]));
  }
  loss /= static_cast<T>(rows);
  if (!std::isfinite(static_cast<double>(loss))) {
    throw numeric_error("cross_entropy: non-finite loss");
  }
  auto& c = counters();
  c.element_reads += 3ull * rows * cols;
  c.element_writes += 1;
  Tensor<T> y = Tensor<T>::scalar(loss, Alloc::activation);
  return detail::make_op<T>("cross_entropy",
      std::move(y), {logits}, [logits, labels = std::move(labels), rows, cols](Node<T>& self) {
        if (!logits->requires_grad) return;
        Tensor<T>& lg = logits->ensure_grad();
        const T g0 = self.grad(std::size_t{0});
        for (std::size_t i = 0; i < rows; ++i) {
          T mx = logits->value(i, 0);
          for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, logits->value(i, j));
          T sum = T(0);
          for (std::size_t j = 0; j < cols; ++j) sum += std::exp(logits->value(i, j) - mx);
          for (std::size_t j = 0; j < cols; ++j) {
            T p = std::exp(logits->value(i, j) - mx) / sum;
            T target = (static_cast<std::size_t>(labels[i]) == j) ? T(1) : T(0);
            lg(i, j) += g0 * (p - target) / static_cast<T>(rows);
          }
        }
      });
}

template <typename T>
NodePtr<T> sum_all(const NodePtr<T>& x) {
  T total = T(0);
  x->value.for_each([&](const std::vector<std::size_t>&, const T& v) { total += v; });
  auto& c = counters();
  c.element_reads += x->value.size();
  c.element_writes += 1;
  Tensor<T> y = Tensor<T>::scalar(total, Alloc::activation);
  return detail::make_op<T>("sum_all", std::move(y), {x}, [x](Node<T>& self) {
    if (!x->requires_grad) return;
    const T g0 = self.grad(std::size_t{0});
    Tensor<T>& xg = x->ensure_grad();
    xg.transform([&](const std::vector<std::size_t>&, T v) { return v + g0; });
  });
}

/// Valid cross-correlation of NCHW input with OCKK kernels.
template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& k, std::size_t padding = 0,
                  std::size_t stride = 1) {
  if (x->value.rank() != 4 || k->value.rank() != 4) throw shape_error("conv2d: expected 4-D tensors");
  if (x->value.shape(1) != k->value.shape(1)) {
    throw shape_error("conv2d: channel mismatch between input and kernel");
  }
  if (stride == 0) throw shape_error("conv2d: stride must be positive");
  const std::size_t N = x->value.shape(0), C = x->value.shape(1);
  const std::size_t H = x->value.shape(2), W = x->value.shape(3);
  const std::size_t O = k->value.shape(0), KH = k->value.shape(2), KW = k->value.shape(3);
  if (H + 2 * padding < KH || W + 2 * padding < KW) {
    throw shape_error("conv2d: kernel larger than padded input");
  }
  const std::size_t HO = (H + 2 * padding - KH) / stride + 1;
  const std::size_t WO = (W + 2 * padding - KW) / stride + 1;
  Tensor<T> y = Tensor<T>::zeros({N, O, HO, WO}, Alloc::activation);

  const T* xd = x->value.data();
  const T* kd = k->value.data();
  T* yd = y.data();
  const auto& xs = x->value.strides();
  const auto& ks = k->value.strides();
  const auto& ys = y.strides();
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t oh = 0; oh < HO; ++oh) {
        for (std::size_t ow = 0; ow < WO; ++ow) {
          T acc = T(0);
          for (std::size_t ci = 0; ci < C; ++ci) {
            for (std::size_t kh = 0; kh < KH; ++kh) {
              const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) - pad;
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kw = 0; kw < KW; ++kw) {
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + kw) - pad;
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += xd[static_cast<std::ptrdiff_t>(n) * xs[0] +
                          static_cast<std::ptrdiff_t>(ci) * xs[1] + ih * xs[2] + iw * xs[3]] *
                       kd[static_cast<std::ptrdiff_t>(o) * ks[0] +
                          static_cast<std::ptrdiff_t>(ci) * ks[1] +
                          static_cast<std::ptrdiff_t>(kh) * ks[2] +
                          static_cast<std::ptrdiff_t>(kw) * ks[3]];
              }
            }
          }
          yd[static_cast<std::ptrdiff_t>(n) * ys[0] + static_cast<std::ptrdiff_t>(o) * ys[1] +
             static_cast<std::ptrdiff_t>(oh) * ys[2] + static_cast<std::ptrdiff_t>(ow) * ys[3]] =
              acc;
        }
      }
    }
  }
  auto& c = counters();
  const std::uint64_t macs =
      static_cast<std::uint64_t>(N) * O * HO * WO * C * KH * KW;
  c.multiply_ops += macs;
  c.element_reads += 2 * macs;
  c.element_writes += static_cast<std::uint64_t>(N) * O * HO * WO;
  return detail::make_op<T>("conv2d",
      std::move(y), {x, k}, [x, k, padding, stride, N, C, H, W, O, KH, KW, HO, WO](Node<T>& self) {
        const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(padding);
        const T* gd = self.grad.data();
        const auto& gs = self.grad.strides();
        if (x->requires_grad) {
          Tensor<T>& xg = x->ensure_grad();
          T* xgd = xg.data();
          const auto& xgs = xg.strides();
          const T* kd = k->value.data();
          const auto& ks = k->value.strides();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o)
              for (std::size_t oh = 0; oh < HO; ++oh)
                for (std::size_t ow = 0; ow < WO; ++ow) {
                  const T g = gd[static_cast<std::ptrdiff_t>(n) * gs[0] +
                                 static_cast<std::ptrdiff_t>(o) * gs[1] +
                                 static_cast<std::ptrdiff_t>(oh) * gs[2] +
                                 static_cast<std::ptrdiff_t>(ow) * gs[3]];
                  if (g == T(0)) continue;
                  for (std::size_t ci = 0; ci < C; ++ci)
                    for (std::size_t kh = 0; kh < KH; ++kh) {
                      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) - pad;
                      if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                      for (std::size_t kw = 0; kw < KW; ++kw) {
                        const std::ptrdiff_t iw =
                            static_cast<std::ptrdiff_t>(ow * stride + kw) - pad;
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                        xgd[static_cast<std::ptrdiff_t>(n) * xgs[0] +
                            static_cast<std::ptrdiff_t>(ci) * xgs[1] + ih * xgs[2] +
                            iw * xgs[3]] +=
                            g * kd[static_cast<std::ptrdiff_t>(o) * ks[0] +
                                   static_cast<std::ptrdiff_t>(ci) * ks[1] +
                                   static_cast<std::ptrdiff_t>(kh) * ks[2] +
                                   static_cast<std::ptrdiff_t>(kw) * ks[3]];
                      }
                    }
                }
        }
        if (k->requires_grad) {
          Tensor<T>& kg = k->ensure_grad();
          T* kgd = kg.data();
          const auto& kgs = kg.strides();
          const T* xd = x->value.data();
          const auto& xs = x->value.strides();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o)
              for (std::size_t oh = 0; oh < HO; ++oh)
                for (std::size_t ow = 0; ow < WO; ++ow) {
                  const T g = gd[static_cast<std::ptrdiff_t>(n) * gs[0] +
                                 static_cast<std::ptrdiff_t>(o) * gs[1] +
                                 static_cast<std::ptrdiff_t>(oh) * gs[2] +
                                 static_cast<std::ptrdiff_t>(ow) * gs[3]];
                  if (g == T(0)) continue;
                  for (std::size_t ci = 0; ci < C; ++ci)
                    for (std::size_t kh = 0; kh < KH; ++kh) {
                      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + kh) - pad;
                      if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                      for (std::size_t kw = 0; kw < KW; ++kw) {
                        const std::ptrdiff_t iw =
                            static_cast<std::ptrdiff_t>(ow * stride + kw) - pad;
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                        kgd[static_cast<std::ptrdiff_t>(o) * kgs[0] +
                            static_cast<std::ptrdiff_t>(ci) * kgs[1] +
                            static_cast<std::ptrdiff_t>(kh) * kgs[2] +
                            static_cast<std::ptrdiff_t>(kw) * kgs[3]] +=
                            g * xd[static_cast<std::ptrdiff_t>(n) * xs[0] +
                                   static_cast<std::ptrdiff_t>(ci) * xs[1] + ih * xs[2] +
                                   iw * xs[3]];
                      }
                    }
                }
        }
      });
}

/// Batch normalisation over N, H, W per channel. `gamma` and `beta` carry
/// the (possibly sliced) affine parameters; `running_mean`/`running_var`
/// are the full-width statistics vectors of which only
/// [seg_start, seg_start + C) is read and updated during a training step.
template <typename T>
NodePtr<T> batch_norm2d(const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta,
                        Tensor<T>& running_mean, Tensor<T>& running_var, std::size_t seg_start,
                        bool training, T momentum = T(0.1), T eps = T(1e-5)) {
  if (x->value.rank() != 4) throw shape_error("batch_norm2d: expected NCHW input");
  const std::size_t N = x->value.shape(0), C = x->value.shape(1);
  const std::size_t H = x->value.shape(2), W = x->value.shape(3);
  if (gamma->value.rank() != 1 || gamma->value.shape(0) != C || beta->value.shape(0) != C) {
    throw shape_error("batch_norm2d: affine parameter width mismatch");
  }
  if (seg_start + C > running_mean.shape(0) || running_var.shape(0) != running_mean.shape(0)) {
    throw bounds_error("batch_norm2d: statistics segment out of range");
  }
  const std::size_t reduce = N * H * W;
  std::vector<T> mean(C, T(0)), var(C, T(0));
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      T m = T(0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t w = 0; w < W; ++w) m += x->value(n, c, h, w);
      m /= static_cast<T>(reduce);
      T v = T(0);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t w = 0; w < W; ++w) {
            T d = x->value(n, c, h, w) - m;
            v += d * d;
          }
      v /= static_cast<T>(reduce);
      mean[c] = m;
      var[c] = v;
      const T unbiased = reduce > 1 ? v * static_cast<T>(reduce) / static_cast<T>(reduce - 1) : v;
      running_mean(seg_start + c) = (T(1) - momentum) * running_mean(seg_start + c) + momentum * m;
      running_var(seg_start + c) =
          (T(1) - momentum) * running_var(seg_start + c) + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean(seg_start + c);
      var[c] = running_var(seg_start + c);
    }
  }
  Tensor<T> y = Tensor<T>::zeros({N, C, H, W}, Alloc::activation);
  for (std::size_t c = 0; c < C; ++c) {
    const T is = T(1) / std::sqrt(var[c] + eps);
    const T g = gamma->value(c), b = beta->value(c);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
          y(n, c, h, w) = g * (x->value(n, c, h, w) - mean[c]) * is + b;
        }
  }
  auto& c = counters();
  c.element_reads += 3ull * x->value.size();
  c.element_writes += y.size();
  return detail::make_op<T>("batch_norm2d",
      std::move(y), {x, gamma, beta},
      [x, gamma, beta, mean = std::move(mean), var = std::move(var), training, eps, N, C, H,
       W](Node<T>& self) {
        const std::size_t reduce = N * H * W;
        for (std::size_t ch = 0; ch < C; ++ch) {
          const T is = T(1) / std::sqrt(var[ch] + eps);
          T gsum = T(0), gxsum = T(0);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t h = 0; h < H; ++h)
              for (std::size_t w = 0; w < W; ++w) {
                const T g = self.grad(n, ch, h, w);
                gsum += g;
                gxsum += g * (x->value(n, ch, h, w) - mean[ch]) * is;
              }
          if (gamma->requires_grad) gamma->ensure_grad()(ch) += gxsum;
          if (beta->requires_grad) beta->ensure_grad()(ch) += gsum;
          if (x->requires_grad) {
            Tensor<T>& xg = x->ensure_grad();
            const T gm = gsum / static_cast<T>(reduce);
            const T gxm = gxsum / static_cast<T>(reduce);
            const T gain = gamma->value(ch) * is;
            for (std::size_t n = 0; n < N; ++n)
              for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                  const T xhat = (x->value(n, ch, h, w) - mean[ch]) * is;
                  if (training) {
                    xg(n, ch, h, w) +=
                        gain * (self.grad(n, ch, h, w) - gm - xhat * gxm);
                  } else {
                    xg(n, ch, h, w) += gain * self.grad(n, ch, h, w);
                  }
                }
          }
        }
      });
}

/// Inverted dropout; kept entries are scaled by 1/(1-p). p = 0 is the
/// identity and returns the input node unchanged.
template <typename T, typename Rng>
NodePtr<T> dropout(const NodePtr<T>& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw rate_error("dropout: rate must lie in [0, 1)");
  if (p == 0.0) return x;
  const std::size_t n = x->value.size();
  std::vector<std::uint8_t> mask(n);
  std::bernoulli_distribution keep(1.0 - p);
  for (std::size_t i = 0; i < n; ++i) mask[i] = keep(rng) ? 1 : 0;
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> y = Tensor<T>::zeros(x->value.shape(), Alloc::activation);
  {
    std::size_t i = 0;
    x->value.for_each([&](const std::vector<std::size_t>& ix, const T& v) {
      y.at(ix) = mask[i] ? v * scale : T(0);
      ++i;
    });
  }
  auto& c = counters();
  c.element_reads += n;
  c.element_writes += n;
  return detail::make_op<T>("dropout", std::move(y), {x},
                            [x, mask = std::move(mask), scale](Node<T>& self) {
                              if (!x->requires_grad) return;
                              Tensor<T>& xg = x->ensure_grad();
                              std::size_t i = 0;
                              self.grad.for_each(
                                  [&](const std::vector<std::size_t>& ix, const T& v) {
                                    if (mask[i]) xg.at(ix) += v * scale;
                                    ++i;
                                  });
                            });
}

namespace detail {

inline void check_gather_indices(const std::vector<std::size_t>& idx, std::size_t extent,
                                 const char* what) {
  if (idx.empty()) throw index_error(std::string(what) + ": empty index list");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= extent) throw index_error(std::string(what) + ": index out of range");
    if (i > 0 && idx[i] <= idx[i - 1]) {
      throw index_error(std::string(what) + ": indices must be strictly increasing");
    }
  }
}

} // namespace detail

/// Copies the selected row/column grid of a matrix into new memory, the
/// way controlled-dropout gather ops do. Records the copy in the weight
/// manipulation counters; gradients scatter back to the source grid.
template <typename T>
NodePtr<T> gather2d(const NodePtr<T>& w, std::vector<std::size_t> rows,
                    std::vector<std::size_t> cols) {
  detail::require_matrix(w->value, "gather2d/w");
  detail::check_gather_indices(rows, w->value.shape(0), "gather2d rows");
  detail::check_gather_indices(cols, w->value.shape(1), "gather2d cols");
  const std::size_t r = rows.size(), c = cols.size();
  Tensor<T> y = Tensor<T>::zeros({r, c}, Alloc::activation);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y(i, j) = w->value(rows[i], cols[j]);
  auto& cnt = counters();
  cnt.copy_bytes_allocated += r * c * sizeof(T);
  cnt.element_reads += static_cast<std::uint64_t>(r) * c;
  cnt.element_writes += static_cast<std::uint64_t>(r) * c;
  return detail::make_op<T>("gather2d", std::move(y), {w},
                            [w, rows = std::move(rows), cols = std::move(cols)](Node<T>& self) {
                              if (!w->requires_grad) return;
                              Tensor<T>& wg = w->ensure_grad();
                              for (std::size_t i = 0; i < rows.size(); ++i)
                                for (std::size_t j = 0; j < cols.size(); ++j)
                                  wg(rows[i], cols[j]) += self.grad(i, j);
                            });
}

template <typename T>
NodePtr<T> gather1d(const NodePtr<T>& v, std::vector<std::size_t> idx) {
  if (v->value.rank() != 1) throw shape_error("gather1d: expected a vector");
  detail::check_gather_indices(idx, v->value.shape(0), "gather1d");
  const std::size_t n = idx.size();
  Tensor<T> y = Tensor<T>::zeros({n}, Alloc::activation);
  for (std::size_t i = 0; i < n; ++i) y(i) = v->value(idx[i]);
  auto& cnt = counters();
  cnt.copy_bytes_allocated += n * sizeof(T);
  cnt.element_reads += n;
  cnt.element_writes += n;
  return detail::make_op<T>("gather1d", std::move(y), {v}, [v, idx = std::move(idx)](Node<T>& self) {
    if (!v->requires_grad) return;
    Tensor<T>& vg = v->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) vg(idx[i]) += self.grad(i);
  });
}

/// Stacks 2-D parts with equal column counts along the row axis.
template <typename T>
NodePtr<T> concat_rows(const std::vector<NodePtr<T>>& parts) {
  if (parts.empty()) throw shape_error("concat_rows: no parts");
  const std::size_t cols = parts.front()->value.shape(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p->value, "concat_rows/part");
    if (p->value.shape(1) != cols) throw shape_error("concat_rows: column mismatch");
    rows += p->value.shape(0);
  }
  Tensor<T> y = Tensor<T>::zeros({rows, cols}, Alloc::activation);
  std::size_t at = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p->value.shape(0); ++i)
      for (std::size_t j = 0; j < cols; ++j) y(at + i, j) = p->value(i, j);
    at += p->value.shape(0);
  }
  auto& c = counters();
  c.element_reads += static_cast<std::uint64_t>(rows) * cols;
  c.element_writes += static_cast<std::uint64_t>(rows) * cols;
  return detail::make_op<T>("concat_rows", std::move(y), parts, [parts, cols](Node<T>& self) {
    std::size_t at = 0;
    for (const auto& p : parts) {
      const std::size_t r = p->value.shape(0);
      if (p->requires_grad) {
        Tensor<T>& pg = p->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < cols; ++j) pg(i, j) += self.grad(at + i, j);
      }
      at += r;
    }
  });
}

template <typename T>
NodePtr<T> mean_rows(const NodePtr<T>& x) {
  detail::require_matrix(x->value, "mean_rows/x");
  const std::size_t rows = x->value.shape(0), cols = x->value.shape(1);
  Tensor<T> y = Tensor<T>::zeros({1, cols}, Alloc::activation);
  for (std::size_t j = 0; j < cols; ++j) {
    T acc = T(0);
    for (std::size_t i = 0; i < rows; ++i) acc += x->value(i, j);
    y(std::size_t{0}, j) = acc / static_cast<T>(rows);
  }
  auto& c = counters();
  c.element_reads += static_cast<std::uint64_t>(rows) * cols;
  c.element_writes += cols;
  return detail::make_op<T>("mean_rows", std::move(y), {x}, [x, rows, cols](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& xg = x->ensure_grad();
    for (std::size_t j = 0; j < cols; ++j) {
      const T g = self.grad(std::size_t{0}, j) / static_cast<T>(rows);
      for (std::size_t i = 0; i < rows; ++i) xg(i, j) += g;
    }
  });
}

/// NCHW -> NC mean over the spatial axes.
template <typename T>
NodePtr<T> global_avg_pool(const NodePtr<T>& x) {
  if (x->value.rank() != 4) throw shape_error("global_avg_pool: expected NCHW");
  const std::size_t N = x->value.shape(0), C = x->value.shape(1);
  const std::size_t H = x->value.shape(2), W = x->value.shape(3);
  Tensor<T> y = Tensor<T>::zeros({N, C}, Alloc::activation);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      T acc = T(0);
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) acc += x->value(n, c, h, w);
      y(n, c) = acc / static_cast<T>(H * W);
    }
  auto& cnt = counters();
  cnt.element_reads += x->value.size();
  cnt.element_writes += y.size();
  return detail::make_op<T>("global_avg_pool", std::move(y), {x}, [x, N, C, H, W](Node<T>& self) {
    if (!x->requires_grad) return;
    Tensor<T>& xg = x->ensure_grad();
    const T denom = static_cast<T>(H * W);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const T g = self.grad(n, c) / denom;
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t w = 0; w < W; ++w) xg(n, c, h, w) += g;
      }
  });
}

} // namespace sliceout
