// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sliceout/autodiff.hpp"
#include "sliceout/gradcheck.hpp"

using namespace sliceout;
using D = double;

namespace {

NodePtr<D> tensor_leaf(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad = false) {
  return leaf(Tensor<D>::from_vector(std::move(shape), std::move(values)), requires_grad);
}

} // namespace

TEST_CASE("matmul identity and hand arithmetic") {
  auto a = tensor_leaf({2, 2}, {1, 2, 3, 4});
  auto eye = tensor_leaf({2, 2}, {1, 0, 0, 1});
  auto y = matmul(a, eye);
  REQUIRE(y->value.to_vector() == std::vector<double>{1, 2, 3, 4});

  auto b = tensor_leaf({2, 1}, {5, 6});
  auto z = matmul(a, b);
  REQUIRE(z->value.to_vector() == std::vector<double>{17, 39});

  REQUIRE_THROWS_AS(matmul(a, tensor_leaf({3, 1}, {1, 2, 3})), shape_error);
}

TEST_CASE("matmul gradient equals ones times B transpose") {
  std::mt19937_64 rng(5);
  Tensor<D> av = Tensor<D>::zeros({3, 4});
  Tensor<D> bv = Tensor<D>::zeros({4, 2});
  fill_normal(av, rng);
  fill_normal(bv, rng);
  auto a = leaf(av.clone(), true);
  auto b = leaf(bv.clone(), true);
  auto loss = sum_all(matmul(a, b));
  backward(loss);
  // dA = ones * B^T
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double expect = bv(j, std::size_t{0}) + bv(j, std::size_t{1});
      REQUIRE_THAT(a->grad(i, j), Catch::Matchers::WithinAbs(expect, 1e-12));
    }
  }
  // and against central differences
  auto f = [&](const std::vector<NodePtr<D>>&) { return sum_all(matmul(a, b)); };
  REQUIRE(grad_check<D>(f, {a, b}) < 1e-6);
}

TEST_CASE("matmul counter sanity") {
  counters().reset_step();
  auto a = leaf(Tensor<D>::zeros({3, 5}));
  auto b = leaf(Tensor<D>::zeros({5, 7}));
  matmul(a, b);
  REQUIRE(counters().multiply_ops == 3u * 5 * 7);
  REQUIRE(counters().element_reads == 2u * 3 * 5 * 7);
  REQUIRE(counters().element_writes == 3u * 7);
}

TEST_CASE("conv2d identity kernel and all-ones sum") {
  std::mt19937_64 rng(2);
  Tensor<D> xv = Tensor<D>::zeros({1, 1, 4, 4});
  fill_normal(xv, rng);
  auto x = leaf(xv.clone());
  auto k1 = tensor_leaf({1, 1, 1, 1}, {1.0});
  auto y = conv2d(x, k1, 0, 1);
  REQUIRE(y->value.shape() == std::vector<std::size_t>{1, 1, 4, 4});
  REQUIRE(y->value.to_vector() == xv.to_vector());

  auto ones_x = leaf(Tensor<D>::full({1, 1, 3, 3}, 1.0));
  auto ones_k = leaf(Tensor<D>::full({1, 1, 3, 3}, 1.0));
  auto s = conv2d(ones_x, ones_k, 0, 1);
  REQUIRE(s->value.size() == 1);
  REQUIRE(s->value(std::size_t{0}, std::size_t{0}, std::size_t{0}, std::size_t{0}) == 9.0);

  REQUIRE_THROWS_AS(conv2d(leaf(Tensor<D>::zeros({1, 2, 4, 4})),
                           leaf(Tensor<D>::zeros({1, 3, 3, 3})), 1, 1),
                    shape_error);
}

TEST_CASE("conv2d gradient vs finite differences on a 1x2x4x4 input") {
  std::mt19937_64 rng(3);
  Tensor<D> xv = Tensor<D>::zeros({1, 2, 4, 4});
  Tensor<D> kv = Tensor<D>::zeros({3, 2, 3, 3});
  fill_normal(xv, rng);
  fill_normal(kv, rng);
  auto x = leaf(xv.clone(), true);
  auto k = leaf(kv.clone(), true);
  auto f = [&](const std::vector<NodePtr<D>>&) { return sum_all(conv2d(x, k, 1, 1)); };
  REQUIRE(grad_check<D>(f, {x, k}) < 1e-6);
}

TEST_CASE("conv2d stride and padding shapes") {
  auto x = leaf(Tensor<D>::zeros({1, 1, 5, 5}));
  auto k = leaf(Tensor<D>::zeros({2, 1, 3, 3}));
  REQUIRE(conv2d(x, k, 0, 2)->value.shape() == std::vector<std::size_t>{1, 2, 2, 2});
  REQUIRE(conv2d(x, k, 1, 2)->value.shape() == std::vector<std::size_t>{1, 2, 3, 3});
}

TEST_CASE("relu and softmax basics") {
  auto x = tensor_leaf({1, 2}, {-1, 2});
  REQUIRE(relu(x)->value.to_vector() == std::vector<double>{0, 2});

  auto z = tensor_leaf({1, 2}, {0, 0});
  auto s = softmax(z, 1);
  REQUIRE_THAT(s->value(std::size_t{0}, std::size_t{0}), Catch::Matchers::WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(s->value(std::size_t{0}, std::size_t{1}), Catch::Matchers::WithinAbs(0.5, 1e-15));

  std::mt19937_64 rng(11);
  Tensor<D> big = Tensor<D>::zeros({4, 7});
  fill_normal(big, rng, 0.0, 3.0);
  auto rows = softmax(leaf(big.clone()), 1);
  for (std::size_t i = 0; i < 4; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 7; ++j) total += rows->value(i, j);
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("cross entropy value, gradient and label validation") {
  auto logits = tensor_leaf({2, 3}, {1, 2, 3, 0, 0, 0}, true);
  auto loss = cross_entropy(logits, {2, 0});
  const double expect =
      0.5 * ((std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0) + std::log(3.0));
  REQUIRE_THAT(loss->value(std::size_t{0}), Catch::Matchers::WithinAbs(expect, 1e-12));

  auto f = [&](const std::vector<NodePtr<D>>&) { return cross_entropy(logits, {2, 0}); };
  REQUIRE(grad_check<D>(f, {logits}) < 1e-6);

  REQUIRE_THROWS_AS(cross_entropy(logits, {3, 0}), label_error);
  REQUIRE_THROWS_AS(cross_entropy(logits, {-1, 0}), label_error);
}

TEST_CASE("grad_check worked examples") {
  // f(x) = sum(x^2) via elementwise multiply through scale_columns path
  auto x = tensor_leaf({1, 2}, {1, 2}, true);
  auto fsq = [&](const std::vector<NodePtr<D>>&) {
    auto y = matmul_nt(x, x);  // [1,1] = sum of squares
    return sum_all(y);
  };
  auto before = x->value.to_vector();
  REQUIRE(grad_check<D>(fsq, {x}, 1e-5) < 1e-8);
  REQUIRE(x->value.to_vector() == before);  // perturbations restored

  // analytic gradient [2, 4]
  x->release_grad();
  backward(fsq({}));
  REQUIRE_THAT(x->grad(std::size_t{0}, std::size_t{0}), Catch::Matchers::WithinAbs(2.0, 1e-12));
  REQUIRE_THAT(x->grad(std::size_t{0}, std::size_t{1}), Catch::Matchers::WithinAbs(4.0, 1e-12));

  // f(x) = sum(x): gradient exactly ones
  auto z = tensor_leaf({3}, {0.3, -2.0, 5.0}, true);
  auto fsum = [&](const std::vector<NodePtr<D>>&) { return sum_all(z); };
  REQUIRE(grad_check<D>(fsum, {z}, 1e-5) < 1e-10);

  REQUIRE_THROWS_AS(grad_check<D>(fsum, {z}, 1e-2), usage_error);
}

TEST_CASE("backward through a slice view scatters and zeros elsewhere") {
  std::mt19937_64 rng(7);
  Tensor<D> wv = Tensor<D>::zeros({6, 5});
  fill_normal(wv, rng);
  auto w = parameter(wv.clone());
  auto x = leaf(Tensor<D>::full({2, 3}, 1.0));
  auto view = slice_view(slice_view(w, 0, 2, 2), 1, 1, 3);
  auto loss = sum_all(matmul_nt(x, view));
  backward(loss);
  REQUIRE(w->grad.defined());
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const bool inside = i >= 2 && i < 4 && j >= 1 && j < 4;
      if (inside) {
        REQUIRE(w->grad(i, j) == 2.0);  // two batch rows of ones
      } else {
        REQUIRE(w->grad(i, j) == 0.0);
      }
    }
  }
}

TEST_CASE("randomized ops pass grad_check below 1e-5") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor<D> xv = Tensor<D>::zeros({3, 6});
    fill_normal(xv, rng);
    auto x = leaf(xv.clone(), true);
    Tensor<D> wv = Tensor<D>::zeros({4, 6});
    fill_normal(wv, rng);
    auto w = parameter(wv.clone());
    auto b = parameter(Tensor<D>::zeros({4}));
    std::vector<int> labels = {0, 3, 1};
    auto f = [&](const std::vector<NodePtr<D>>&) {
      auto h = add_rowvec(matmul_nt(x, w), b);
      h = relu(h);
      h = layer_norm(h);
      h = scale_columns(h, {1.0, -0.5, 2.0, 0.25});
      return cross_entropy(h, labels);
    };
    REQUIRE(grad_check<D>(f, {x, w, b}) < 1e-5);
  }
}

TEST_CASE("dropout keeps scale and handles p = 0 as identity") {
  std::mt19937_64 rng(23);
  auto x = tensor_leaf({1, 2}, {2, 4});
  auto same = dropout(x, 0.0, rng);
  REQUIRE(same.get() == x.get());
  REQUIRE_THROWS_AS(dropout(x, 1.0, rng), rate_error);

  // p = 0.5: kept entries double
  bool saw_kept = false, saw_dropped = false;
  for (int i = 0; i < 64 && !(saw_kept && saw_dropped); ++i) {
    auto y = dropout(x, 0.5, rng);
    for (std::size_t j = 0; j < 2; ++j) {
      const double v = y->value(std::size_t{0}, j);
      if (v == 0.0) saw_dropped = true;
      if (v == 2.0 * x->value(std::size_t{0}, j)) saw_kept = true;
    }
  }
  REQUIRE(saw_kept);
  REQUIRE(saw_dropped);
}

TEST_CASE("no-grad evaluation builds no graph") {
  auto w = parameter(Tensor<D>::full({2, 2}, 1.0));
  auto x = leaf(Tensor<D>::full({1, 2}, 1.0));
  NoGradGuard guard;
  auto y = matmul_nt(x, w);
  REQUIRE_FALSE(y->requires_grad);
  REQUIRE(y->parents.empty());
}

TEST_CASE("batch norm normalizes per channel and updates the stats segment") {
  std::mt19937_64 rng(31);
  Tensor<D> xv = Tensor<D>::zeros({2, 2, 3, 3});
  fill_normal(xv, rng, 1.5, 2.0);
  auto x = leaf(xv.clone(), true);
  auto gamma = parameter(Tensor<D>::full({2}, 1.0));
  auto beta = parameter(Tensor<D>::zeros({2}));
  Tensor<D> rm = Tensor<D>::zeros({5});
  Tensor<D> rv = Tensor<D>::full({5}, 1.0);
  auto y = batch_norm2d(x, gamma, beta, rm, rv, 2, true);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t w = 0; w < 3; ++w) mean += y->value(n, c, h, w);
    REQUIRE_THAT(mean / 18.0, Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  // only the [2, 4) segment moved
  REQUIRE(rm(std::size_t{0}) == 0.0);
  REQUIRE(rm(std::size_t{1}) == 0.0);
  REQUIRE(rm(std::size_t{4}) == 0.0);
  REQUIRE(rm(std::size_t{2}) != 0.0);
  REQUIRE(rm(std::size_t{3}) != 0.0);

  // Per-channel sums of normalized values reduce to beta alone, so the
  // readout keys on a single batch row to keep the gradient non-degenerate.
  auto f = [&](const std::vector<NodePtr<D>>&) {
    auto out = batch_norm2d(x, gamma, beta, rm, rv, 2, true);
    auto first_row = slice_view(global_avg_pool(out), 0, 0, 1);
    return sum_all(matmul_nt(first_row, first_row));
  };
  REQUIRE(grad_check<D>(f, {x, gamma, beta}) < 1e-5);
}

TEST_CASE("batch norm eval mode reads the running statistics") {
  std::mt19937_64 rng(37);
  Tensor<D> xv = Tensor<D>::zeros({1, 2, 2, 2});
  fill_normal(xv, rng);
  auto x = leaf(xv.clone());
  auto gamma = parameter(Tensor<D>::full({2}, 2.0));
  auto beta = parameter(Tensor<D>::full({2}, 0.5));
  Tensor<D> rm = Tensor<D>::from_vector({2}, {1.0, -1.0});
  Tensor<D> rv = Tensor<D>::from_vector({2}, {4.0, 0.25});
  const auto rm_before = rm.to_vector();
  auto y = batch_norm2d(x, gamma, beta, rm, rv, 0, /*training=*/false);
  REQUIRE(rm.to_vector() == rm_before);  // eval never updates statistics
  const double eps = 1e-5;
  const double expect = 2.0 * (xv(std::size_t{0}, std::size_t{0}, std::size_t{0}, std::size_t{0}) - 1.0) /
                            std::sqrt(4.0 + eps) +
                        0.5;
  REQUIRE_THAT(y->value(std::size_t{0}, std::size_t{0}, std::size_t{0}, std::size_t{0}),
               Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("reshape, concat and row means propagate gradients") {
  std::mt19937_64 rng(41);
  Tensor<D> wv = Tensor<D>::zeros({6});
  fill_normal(wv, rng);
  auto w = parameter(wv.clone());
  Tensor<D> xv = Tensor<D>::zeros({2, 3});
  fill_normal(xv, rng);
  auto x = leaf(xv.clone(), true);
  auto f = [&](const std::vector<NodePtr<D>>&) {
    auto m = reshape(w, {2, 3});                       // aliased gradient
    auto prod = matmul_nt(x, m);                       // [2, 2]
    auto stacked = concat_rows<D>({prod, mean_rows(prod)});  // [3, 2]
    return sum_all(scale_columns(stacked, {1.0, -2.0}));
  };
  REQUIRE(grad_check<D>(f, {w, x}) < 1e-6);
}

TEST_CASE("softmax over columns") {
  auto x = tensor_leaf({2, 2}, {0, 5, 0, 5}, true);
  auto s = softmax(x, 0);
  for (std::size_t j = 0; j < 2; ++j) {
    REQUIRE_THAT(s->value(std::size_t{0}, j) + s->value(std::size_t{1}, j),
                 Catch::Matchers::WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(s->value(std::size_t{0}, j), Catch::Matchers::WithinAbs(0.5, 1e-12));
  }
  // column sums are fixed at one, so the readout keys on a single row
  auto f = [&](const std::vector<NodePtr<D>>&) {
    return sum_all(scale_columns(slice_view(softmax(x, 0), 0, 0, 1), {1.0, 3.0}));
  };
  REQUIRE(grad_check<D>(f, {x}) < 1e-6);
  REQUIRE_THROWS_AS(softmax(x, 2), axis_error);
}

TEST_CASE("gather ops validate indices and count copies") {
  auto w = parameter(Tensor<D>::from_vector({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  counters().reset_step();
  auto g = gather2d(w, {0, 2}, {1, 2});
  REQUIRE(g->value.to_vector() == std::vector<double>{2, 3, 8, 9});
  REQUIRE(counters().copy_bytes_allocated == 4 * sizeof(double));
  REQUIRE(counters().element_reads == 4);
  REQUIRE(counters().element_writes == 4);

  REQUIRE_THROWS_AS(gather2d(w, {2, 0}, {1, 2}), index_error);
  REQUIRE_THROWS_AS(gather2d(w, {0, 0}, {1, 2}), index_error);
  REQUIRE_THROWS_AS(gather2d(w, {0, 3}, {1, 2}), index_error);

  backward(sum_all(g));
  REQUIRE(w->grad(std::size_t{0}, std::size_t{1}) == 1.0);
  REQUIRE(w->grad(std::size_t{0}, std::size_t{0}) == 0.0);
  REQUIRE(w->grad(std::size_t{1}, std::size_t{1}) == 0.0);
}

TEST_CASE("nodes carry their operation tag") {
  auto a = tensor_leaf({1, 2}, {1, 2}, true);
  REQUIRE(std::string(a->op) == "leaf");
  REQUIRE(std::string(matmul_nt(a, a)->op) == "matmul_nt");
  REQUIRE(std::string(relu(a)->op) == "relu");
  REQUIRE(std::string(slice_view(a, 1, 0, 1)->op) == "slice_view");
}
