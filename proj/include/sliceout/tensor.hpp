// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "sliceout/counters.hpp"
#include "sliceout/errors.hpp"

namespace sliceout {

/// Whether a buffer participates in the activation-byte gauge.
/// Parameters and user data use `plain`; op outputs, per-step inputs and
/// gradient buffers use `activation`.
enum class Alloc { plain, activation };

namespace detail {

template <typename T>
struct Storage {
  std::vector<T> data;
  std::size_t tracked_bytes = 0;
  InstrumentationCounters* gauge = nullptr;

  ~Storage() {
    if (gauge != nullptr) gauge->on_activation_release(tracked_bytes);
  }
};

template <typename T>
std::shared_ptr<Storage<T>> make_storage(std::size_t count, Alloc alloc) {
  auto s = std::make_shared<Storage<T>>();
  s->data.assign(count, T(0));
  if (alloc == Alloc::activation) {
    s->tracked_bytes = count * sizeof(T);
    s->gauge = &counters();
    s->gauge->on_activation_alloc(s->tracked_bytes);
  }
  return s;
}

} // namespace detail

/// Dense n-dimensional array over a shared buffer. A view created by
/// `slice_view` or `reshape` changes only (offset, shape, strides) and
/// aliases the parent's storage; writes through the view land in the
/// parent. Contiguous tensors are row-major.
template <typename T>
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, Alloc alloc = Alloc::plain) {
    Tensor t;
    t.init_shape(std::move(shape));
    t.storage_ = detail::make_storage<T>(t.size_, alloc);
    return t;
  }

  static Tensor full(std::vector<std::size_t> shape, T value, Alloc alloc = Alloc::plain) {
    Tensor t = zeros(std::move(shape), alloc);
    for (auto& v : t.storage_->data) v = value;
    return t;
  }

  static Tensor from_vector(std::vector<std::size_t> shape, std::vector<T> values,
                            Alloc alloc = Alloc::plain) {
    Tensor t;
    t.init_shape(std::move(shape));
    if (values.size() != t.size_) {
      throw shape_error("value count does not match shape");
    }
    t.storage_ = detail::make_storage<T>(0, Alloc::plain);
    t.storage_->data = std::move(values);
    if (alloc == Alloc::activation) {
      t.storage_->tracked_bytes = t.size_ * sizeof(T);
      t.storage_->gauge = &counters();
      t.storage_->gauge->on_activation_alloc(t.storage_->tracked_bytes);
    }
    return t;
  }

  static Tensor scalar(T value, Alloc alloc = Alloc::plain) {
    return from_vector({1}, {value}, alloc);
  }

  bool defined() const { return storage_ != nullptr; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return size_; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t shape(std::size_t axis) const { return shape_.at(axis); }
  const std::vector<std::ptrdiff_t>& strides() const { return strides_; }
  std::ptrdiff_t stride(std::size_t axis) const { return strides_.at(axis); }
  std::size_t offset() const { return offset_; }
  std::size_t storage_bytes() const { return storage_ ? storage_->data.size() * sizeof(T) : 0; }

  bool shares_storage(const Tensor& other) const { return storage_ == other.storage_; }

  T* data() { return storage_->data.data() + offset_; }
  const T* data() const { return storage_->data.data() + offset_; }

  bool is_contiguous() const {
    std::ptrdiff_t expected = 1;
    for (std::size_t i = rank(); i-- > 0;) {
      if (shape_[i] != 1 && strides_[i] != expected) return false;
      expected *= static_cast<std::ptrdiff_t>(shape_[i]);
    }
    return true;
  }

  template <typename... Ix>
  T& operator()(Ix... ix) {
    return storage_->data[flat_index({static_cast<std::size_t>(ix)...})];
  }

  template <typename... Ix>
  const T& operator()(Ix... ix) const {
    return storage_->data[flat_index({static_cast<std::size_t>(ix)...})];
  }

  T& at(const std::vector<std::size_t>& ix) { return storage_->data[flat_index(ix)]; }
  const T& at(const std::vector<std::size_t>& ix) const { return storage_->data[flat_index(ix)]; }

  /// Zero-copy view keeping `width` entries of `axis` starting at `start`.
  Tensor slice_view(std::size_t axis, std::size_t start, std::size_t width) const {
    if (axis >= rank()) {
      throw axis_error("slice_view: axis " + std::to_string(axis) + " out of range for rank " +
                       std::to_string(rank()));
    }
    if (width < 1 || start + width > shape_[axis]) {
      throw bounds_error("slice_view: range [" + std::to_string(start) + ", " +
                         std::to_string(start + width) + ") invalid for extent " +
                         std::to_string(shape_[axis]));
    }
    Tensor v(*this);
    v.offset_ += static_cast<std::size_t>(static_cast<std::ptrdiff_t>(start) * strides_[axis]);
    v.shape_[axis] = width;
    v.size_ = product(v.shape_);
    return v;
  }

  /// Zero-copy reshape of a contiguous tensor.
  Tensor reshape(std::vector<std::size_t> new_shape) const {
    if (!is_contiguous()) throw shape_error("reshape requires a contiguous tensor");
    if (product(new_shape) != size_) throw shape_error("reshape changes element count");
    Tensor v(*this);
    v.shape_ = std::move(new_shape);
    v.strides_ = row_major_strides(v.shape_);
    v.size_ = product(v.shape_);
    return v;
  }

  /// Compact row-major copy.
  Tensor clone(Alloc alloc = Alloc::plain) const {
    Tensor out = zeros(shape_, alloc);
    copy_into(out);
    return out;
  }

  /// Element-wise copy into `dst` (same shape, any strides).
  void copy_into(Tensor& dst) const {
    if (dst.shape_ != shape_) throw shape_error("copy_into: shape mismatch");
    std::vector<std::size_t> ix(rank(), 0);
    for (std::size_t n = 0; n < size_; ++n) {
      dst.at(ix) = at(ix);
      advance(ix);
    }
  }

  void fill(T value) {
    std::vector<std::size_t> ix(rank(), 0);
    for (std::size_t n = 0; n < size_; ++n) {
      at(ix) = value;
      advance(ix);
    }
  }

  /// Visits elements in row-major index order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    std::vector<std::size_t> ix(rank(), 0);
    for (std::size_t n = 0; n < size_; ++n) {
      fn(ix, at(ix));
      advance(ix);
    }
  }

  template <typename Fn>
  void transform(Fn&& fn) {
    std::vector<std::size_t> ix(rank(), 0);
    for (std::size_t n = 0; n < size_; ++n) {
      T& v = at(ix);
      v = fn(ix, v);
      advance(ix);
    }
  }

  std::vector<T> to_vector() const {
    std::vector<T> out;
    out.reserve(size_);
    for_each([&](const std::vector<std::size_t>&, const T& v) { out.push_back(v); });
    return out;
  }

private:
  void init_shape(std::vector<std::size_t> shape) {
    if (shape.empty()) throw shape_error("tensor rank must be at least 1");
    for (std::size_t d : shape) {
      if (d == 0) throw shape_error("tensor dimensions must be positive");
    }
    shape_ = std::move(shape);
    strides_ = row_major_strides(shape_);
    size_ = product(shape_);
    offset_ = 0;
  }

  static std::vector<std::ptrdiff_t> row_major_strides(const std::vector<std::size_t>& shape) {
    std::vector<std::ptrdiff_t> s(shape.size());
    std::ptrdiff_t stride = 1;
    for (std::size_t i = shape.size(); i-- > 0;) {
      s[i] = stride;
      stride *= static_cast<std::ptrdiff_t>(shape[i]);
    }
    return s;
  }

  static std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  std::size_t flat_index(const std::vector<std::size_t>& ix) const {
    if (ix.size() != rank()) throw index_error("index rank mismatch");
    std::ptrdiff_t off = static_cast<std::ptrdiff_t>(offset_);
    for (std::size_t i = 0; i < ix.size(); ++i) {
      if (ix[i] >= shape_[i]) throw index_error("index out of range");
      off += static_cast<std::ptrdiff_t>(ix[i]) * strides_[i];
    }
    return static_cast<std::size_t>(off);
  }

  void advance(std::vector<std::size_t>& ix) const {
    for (std::size_t i = ix.size(); i-- > 0;) {
      if (++ix[i] < shape_[i]) return;
      ix[i] = 0;
    }
  }

  std::shared_ptr<detail::Storage<T>> storage_;
  std::vector<std::size_t> shape_;
  std::vector<std::ptrdiff_t> strides_;
  std::size_t offset_ = 0;
  std::size_t size_ = 0;
};

template <typename T, typename Rng>
void fill_normal(Tensor<T>& t, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> dist(mean, stddev);
  t.transform([&](const std::vector<std::size_t>&, T) { return static_cast<T>(dist(rng)); });
}

template <typename T, typename Rng>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  t.transform([&](const std::vector<std::size_t>&, T) { return static_cast<T>(dist(rng)); });
}

} // namespace sliceout
