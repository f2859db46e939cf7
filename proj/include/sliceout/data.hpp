// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sliceout/errors.hpp"
#include "sliceout/tensor.hpp"

namespace sliceout {

template <typename T>
struct Dataset {
  Tensor<T> train_x;  // [n_train, feature_dim]
  std::vector<int> train_y;
  Tensor<T> test_x;
  std::vector<int> test_y;
  std::size_t classes = 0;
  std::size_t feature_dim = 0;
  std::size_t image_h = 0;  // 0 for plain vector data
  std::size_t image_w = 0;
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw io_error("truncated IDX file: " + path);
  }
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

} // namespace detail

constexpr std::uint32_t kIdxImageMagic = 2051;
constexpr std::uint32_t kIdxLabelMagic = 2049;

template <typename T>
struct IdxImages {
  Tensor<T> pixels;  // [count, rows*cols], scaled to [0, 1]
  std::size_t rows = 0;
  std::size_t cols = 0;
};

template <typename T>
IdxImages<T> read_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open IDX image file: " + path);
  const std::uint32_t magic = detail::read_be_u32(in, path);
  if (magic != kIdxImageMagic) {
    throw format_error("IDX image file " + path + ": magic " + std::to_string(magic) +
                       " read, expected " + std::to_string(kIdxImageMagic));
  }
  const std::uint32_t count = detail::read_be_u32(in, path);
  const std::uint32_t rows = detail::read_be_u32(in, path);
  const std::uint32_t cols = detail::read_be_u32(in, path);
  if (count == 0 || rows == 0 || cols == 0) {
    throw format_error("IDX image file " + path + ": zero dimension");
  }
  const std::size_t n = std::size_t(count) * rows * cols;
  std::vector<unsigned char> raw(n);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n))) {
    throw io_error("truncated IDX image data: " + path);
  }
  IdxImages<T> out;
  out.rows = rows;
  out.cols = cols;
  out.pixels = Tensor<T>::zeros({count, std::size_t(rows) * cols});
  T* dst = out.pixels.data();
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<T>(raw[i]) / T(255);
  return out;
}

inline std::vector<int> read_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open IDX label file: " + path);
  const std::uint32_t magic = detail::read_be_u32(in, path);
  if (magic != kIdxLabelMagic) {
    throw format_error("IDX label file " + path + ": magic " + std::to_string(magic) +
                       " read, expected " + std::to_string(kIdxLabelMagic));
  }
  const std::uint32_t count = detail::read_be_u32(in, path);
  std::vector<unsigned char> raw(count);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count))) {
    throw io_error("truncated IDX label data: " + path);
  }
  return std::vector<int>(raw.begin(), raw.end());
}

/// Loads an IDX image/label pair (plus an optional test pair). Without
/// test files the last 20% of the examples becomes the test split.
template <typename T>
Dataset<T> load_idx(const std::string& images_path, const std::string& labels_path,
                    const std::string& test_images_path = "",
                    const std::string& test_labels_path = "") {
  IdxImages<T> images = read_idx_images<T>(images_path);
  std::vector<int> labels = read_idx_labels(labels_path);
  if (images.pixels.shape(0) != labels.size()) {
    throw consistency_error("IDX image/label count mismatch: " +
                            std::to_string(images.pixels.shape(0)) + " images vs " +
                            std::to_string(labels.size()) + " labels");
  }
  Dataset<T> data;
  data.feature_dim = images.rows * images.cols;
  data.image_h = images.rows;
  data.image_w = images.cols;
  int max_label = 0;
  for (int l : labels) max_label = std::max(max_label, l);
  data.classes = static_cast<std::size_t>(max_label) + 1;

  if (!test_images_path.empty() || !test_labels_path.empty()) {
    if (test_images_path.empty() || test_labels_path.empty()) {
      throw config_error("IDX test images and labels must be given together");
    }
    IdxImages<T> timages = read_idx_images<T>(test_images_path);
    std::vector<int> tlabels = read_idx_labels(test_labels_path);
    if (timages.pixels.shape(0) != tlabels.size()) {
      throw consistency_error("IDX test image/label count mismatch");
    }
    if (timages.rows != images.rows || timages.cols != images.cols) {
      throw consistency_error("IDX test image shape differs from train images");
    }
    data.train_x = std::move(images.pixels);
    data.train_y = std::move(labels);
    data.test_x = std::move(timages.pixels);
    data.test_y = std::move(tlabels);
    for (int l : data.test_y) {
      data.classes = std::max(data.classes, static_cast<std::size_t>(l) + 1);
    }
    return data;
  }

  const std::size_t total = labels.size();
  const std::size_t n_train = (total * 8) / 10;
  if (n_train == 0 || n_train == total) {
    throw consistency_error("IDX dataset too small for an 80/20 split");
  }
  data.train_x = Tensor<T>::zeros({n_train, data.feature_dim});
  data.test_x = Tensor<T>::zeros({total - n_train, data.feature_dim});
  for (std::size_t i = 0; i < total; ++i) {
    Tensor<T>& dst = i < n_train ? data.train_x : data.test_x;
    const std::size_t row = i < n_train ? i : i - n_train;
    for (std::size_t j = 0; j < data.feature_dim; ++j) dst(row, j) = images.pixels(i, j);
  }
  data.train_y.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_train));
  data.test_y.assign(labels.begin() + static_cast<std::ptrdiff_t>(n_train), labels.end());
  return data;
}

/// Gaussian clusters around seeded random centers with a deterministic
/// shuffle and an 80/20 train/test split.
template <typename T>
Dataset<T> gen_blobs(std::size_t classes, std::size_t dim, std::size_t per_class,
                     std::uint64_t seed, double spread = 0.3) {
  if (classes < 2) throw config_error("gen_blobs: need at least 2 classes");
  if (dim == 0 || per_class == 0) throw config_error("gen_blobs: dim and n per class must be positive");
  if (spread < 0.0) throw config_error("gen_blobs: spread must be nonnegative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> center_dist(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, spread);

  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers) {
    for (auto& v : c) v = center_dist(rng);
  }

  const std::size_t total = classes * per_class;
  Tensor<T> xs = Tensor<T>::zeros({total, dim});
  std::vector<int> ys(total);
  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++row) {
      for (std::size_t j = 0; j < dim; ++j) {
        xs(row, j) = static_cast<T>(centers[c][j] + (spread > 0.0 ? noise(rng) : 0.0));
      }
      ys[row] = static_cast<int>(c);
    }
  }

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t n_train = (total * 8) / 10;
  Dataset<T> data;
  data.classes = classes;
  data.feature_dim = dim;
  data.train_x = Tensor<T>::zeros({n_train, dim});
  data.test_x = Tensor<T>::zeros({total - n_train, dim});
  data.train_y.resize(n_train);
  data.test_y.resize(total - n_train);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t src = order[i];
    if (i < n_train) {
      for (std::size_t j = 0; j < dim; ++j) data.train_x(i, j) = xs(src, j);
      data.train_y[i] = ys[src];
    } else {
      for (std::size_t j = 0; j < dim; ++j) data.test_x(i - n_train, j) = xs(src, j);
      data.test_y[i - n_train] = ys[src];
    }
  }
  return data;
}

} // namespace sliceout
