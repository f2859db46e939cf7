// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "sliceout/data.hpp"
#include "sliceout/trainer.hpp"

using namespace sliceout;
using D = double;

namespace {

TrainConfig blob_config(SchemeKind kind, double rate, std::size_t epochs = 3) {
  TrainConfig cfg;
  cfg.model.kind = ModelKind::mlp;
  cfg.model.hidden = {32, 32};
  cfg.scheme.kind = kind;
  cfg.scheme.rate = rate;
  cfg.epochs = epochs;
  cfg.batch = 20;
  cfg.seed = 5;
  return cfg;
}

Dataset<D> small_blobs() { return gen_blobs<D>(4, 12, 50, 9, 0.25); }

} // namespace

TEST_CASE("optimizers leave parameters untouched under zero gradients") {
  for (auto kind : {OptimizerKind::sgd_momentum, OptimizerKind::adam}) {
    auto p = parameter(Tensor<D>::from_vector({3}, {1.0, -2.0, 0.5}));
    p->ensure_grad();  // zeros
    OptimizerConfig oc;
    oc.kind = kind;
    Optimizer<D> opt(oc);
    const auto before = p->value.to_vector();
    opt.step({p});
    opt.step({p});
    REQUIRE(p->value.to_vector() == before);
  }
}

TEST_CASE("one SGD step with lr 0.1 moves a scalar from 1.0 to 0.9") {
  auto p = parameter(Tensor<D>::scalar(1.0));
  p->ensure_grad().fill(1.0);
  OptimizerConfig oc;
  oc.kind = OptimizerKind::sgd_momentum;
  oc.learning_rate = 0.1;
  oc.momentum = 0.0;
  Optimizer<D> opt(oc);
  opt.step({p});
  REQUIRE_THAT(p->value(std::size_t{0}), Catch::Matchers::WithinAbs(0.9, 1e-15));
}

TEST_CASE("momentum accumulates velocity") {
  auto p = parameter(Tensor<D>::scalar(0.0));
  OptimizerConfig oc;
  oc.kind = OptimizerKind::sgd_momentum;
  oc.learning_rate = 1.0;
  oc.momentum = 0.5;
  Optimizer<D> opt(oc);
  p->ensure_grad().fill(1.0);
  opt.step({p});  // v=1, p=-1
  opt.step({p});  // v=1.5, p=-2.5
  REQUIRE_THAT(p->value(std::size_t{0}), Catch::Matchers::WithinAbs(-2.5, 1e-15));
}

TEST_CASE("first Adam step moves a parameter by about the learning rate") {
  auto p = parameter(Tensor<D>::scalar(1.0));
  p->ensure_grad().fill(1.0);
  OptimizerConfig oc;
  oc.kind = OptimizerKind::adam;
  oc.learning_rate = 1e-3;
  Optimizer<D> opt(oc);
  opt.step({p});
  // bias-corrected mhat = 1, vhat = 1: step = lr / (1 + eps)
  REQUIRE_THAT(p->value(std::size_t{0}),
               Catch::Matchers::WithinAbs(1.0 - 1e-3 / (1.0 + 1e-8), 1e-12));
}

TEST_CASE("training is deterministic for a fixed config and seed") {
  const auto data = small_blobs();
  const auto cfg = blob_config(SchemeKind::sliceout, 0.4);
  auto a = train<D>(cfg, data);
  auto b = train<D>(cfg, data);
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    REQUIRE(a.epochs[e].train_loss == b.epochs[e].train_loss);
    REQUIRE(a.epochs[e].multiply_ops == b.epochs[e].multiply_ops);
    REQUIRE(a.epochs[e].peak_activation_bytes == b.epochs[e].peak_activation_bytes);
    REQUIRE(a.epochs[e].test_acc == b.epochs[e].test_acc);
  }
  REQUIRE(a.step_slices == b.step_slices);
  for (std::size_t i = 0; i < a.final_params.size(); ++i) {
    REQUIRE(a.final_params[i].to_vector() == b.final_params[i].to_vector());
  }
}

TEST_CASE("sliceout at p=0 is bit-identical to scheme none") {
  const auto data = small_blobs();
  auto none = train<D>(blob_config(SchemeKind::none, 0.0), data);
  auto p0 = train<D>(blob_config(SchemeKind::sliceout, 0.0), data);
  for (std::size_t e = 0; e < none.epochs.size(); ++e) {
    REQUIRE(none.epochs[e].train_loss == p0.epochs[e].train_loss);
    REQUIRE(none.epochs[e].train_acc == p0.epochs[e].train_acc);
    REQUIRE(none.epochs[e].peak_activation_bytes == p0.epochs[e].peak_activation_bytes);
    REQUIRE(none.epochs[e].multiply_ops == p0.epochs[e].multiply_ops);
  }
  for (std::size_t i = 0; i < none.final_params.size(); ++i) {
    REQUIRE(none.final_params[i].to_vector() == p0.final_params[i].to_vector());
  }
}

TEST_CASE("cutoff fraction disables slice sampling in the final epochs") {
  const auto data = small_blobs();
  auto cfg = blob_config(SchemeKind::sliceout, 0.4, 20);
  cfg.sliceout_cutoff_fraction = 0.1;  // floor(20 * 0.1) = 2 cutoff epochs
  auto record = train<D>(cfg, data);
  REQUIRE(record.epochs.size() == 20);
  for (std::size_t e = 0; e < 18; ++e) REQUIRE(record.epochs[e].slice_samples > 0);
  REQUIRE(record.epochs[18].slice_samples == 0);
  REQUIRE(record.epochs[19].slice_samples == 0);
  // multiply counts jump back to the full width during cutoff
  REQUIRE(record.epochs[19].multiply_ops > record.epochs[0].multiply_ops);
}

TEST_CASE("sliced steps record the sliced multiply count") {
  const auto data = small_blobs();
  auto cfg = blob_config(SchemeKind::sliceout, 0.5, 1);
  auto record = train<D>(cfg, data);
  // layer widths: 12 -> 32 -> 32 -> 4 with w = 16
  const std::uint64_t b = cfg.batch;
  const std::uint64_t expect = b * 12 * 16 + b * 16 * 16 + b * 16 * 4;
  REQUIRE(record.epochs[0].multiply_ops == expect);
}

TEST_CASE("peak transient bytes shrink under sliceout and controlled schemes") {
  const auto data = small_blobs();
  const auto base = train<D>(blob_config(SchemeKind::standard, 0.5, 1), data);
  const auto so = train<D>(blob_config(SchemeKind::sliceout, 0.5, 1), data);
  REQUIRE(so.epochs[0].peak_activation_bytes < base.epochs[0].peak_activation_bytes);
  REQUIRE(so.epochs[0].copy_bytes == 0);
  const auto ctl = train<D>(blob_config(SchemeKind::controlled, 0.5, 1), data);
  REQUIRE(ctl.epochs[0].copy_bytes > 0);
}

TEST_CASE("parameters never covered by a sampled slice stay bit-identical") {
  const auto data = small_blobs();
  auto cfg = blob_config(SchemeKind::sliceout, 0.5, 1);
  cfg.batch = 16;  // 160 train rows -> 10 steps
  auto record = train<D>(cfg, data);
  REQUIRE(record.step_slices.size() == 10);

  // hidden layout: layer0 12->32 (out slice), layer1 32->32 (in+out), head 32->4 (in)
  const std::size_t m = 32;
  std::vector<bool> covered0(m, false), covered1(m, false);
  for (const auto& specs : record.step_slices) {
    REQUIRE(specs.size() == 2);
    for (std::size_t j = 0; j < m; ++j) {
      if (specs[0].covers(j)) covered0[j] = true;
      if (specs[1].covers(j)) covered1[j] = true;
    }
  }
  // layer0 weight rows: untouched when the row was never inside slice 0
  const auto& w0_init = record.initial_params[0];
  const auto& w0_final = record.final_params[0];
  std::size_t untouched = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (covered0[r]) continue;
    ++untouched;
    for (std::size_t c = 0; c < 12; ++c) REQUIRE(w0_final(r, c) == w0_init(r, c));
  }
  // layer1 weight cells need both the row (slice 1) and column (slice 0)
  const auto& w1_init = record.initial_params[2];
  const auto& w1_final = record.final_params[2];
  std::size_t untouched_cells = 0;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      bool ever = false;
      for (const auto& specs : record.step_slices) {
        ever = ever || (specs[1].covers(r) && specs[0].covers(c));
      }
      if (!ever) {
        ++untouched_cells;
        REQUIRE(w1_final(r, c) == w1_init(r, c));
      }
    }
  }
  REQUIRE(untouched_cells > 0);  // the check must not be vacuous
}

TEST_CASE("divergence raises a training error naming the epoch") {
  const auto data = small_blobs();
  auto cfg = blob_config(SchemeKind::none, 0.0, 2);
  cfg.optimizer.kind = OptimizerKind::sgd_momentum;
  cfg.optimizer.learning_rate = 1e18;
  REQUIRE_THROWS_AS(train<D>(cfg, data), training_error);
  try {
    train<D>(cfg, data);
  } catch (const training_error& e) {
    REQUIRE(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("bench rejects too few trials and missing baseline") {
  REQUIRE_THROWS_AS(
      (bench_compare<float>(64, 8, 0.5, {SchemeKind::standard, SchemeKind::sliceout}, 1)),
      usage_error);
  REQUIRE_THROWS_AS((bench_compare<float>(64, 8, 0.5, {SchemeKind::sliceout}, 3)), usage_error);
  REQUIRE_THROWS_AS((bench_compare<float>(1, 8, 0.999, {SchemeKind::standard}, 3)), rate_error);
}

TEST_CASE("bench reports schemes against the standard baseline") {
  auto result = bench_compare<float>(
      48, 8, 0.5, {SchemeKind::standard, SchemeKind::sliceout, SchemeKind::controlled}, 3, 3);
  REQUIRE(result.rows.size() == 3);
  double standard_pct = 0;
  for (const auto& row : result.rows) {
    if (row.scheme == SchemeKind::standard) standard_pct = row.rel_time_pct;
    if (row.scheme == SchemeKind::sliceout) {
      REQUIRE(row.peak_activation_bytes < result.rows[0].peak_activation_bytes);
      REQUIRE(row.copy_bytes == 0);
      REQUIRE(row.multiply_ops < result.rows[0].multiply_ops);
    }
    if (row.scheme == SchemeKind::controlled) REQUIRE(row.copy_bytes > 0);
  }
  REQUIRE(standard_pct == 100.0);
}

TEST_CASE("training a resblock and an attention model works end to end") {
  Dataset<D> img = gen_blobs<D>(3, 36, 30, 4, 0.2);  // 6x6 images
  TrainConfig rc;
  rc.model.kind = ModelKind::resblock;
  rc.model.channels = 4;
  rc.model.expanded = 8;
  rc.scheme.kind = SchemeKind::sliceout;
  rc.scheme.rate = 0.5;
  rc.scheme.delayed = true;
  rc.epochs = 2;
  rc.batch = 12;
  auto rrec = train<D>(rc, img);
  REQUIRE(rrec.epochs.size() == 2);
  REQUIRE(std::isfinite(rrec.epochs.back().train_loss));

  Dataset<D> seq = gen_blobs<D>(3, 16, 30, 4, 0.2);  // 4 tokens of width 4
  TrainConfig ac;
  ac.model.kind = ModelKind::attention;
  ac.model.seq_len = 4;
  ac.model.model_dim = 4;
  ac.model.heads = 2;
  ac.model.ff_dim = 8;
  ac.scheme.kind = SchemeKind::sliceout;
  ac.scheme.rate = 0.5;
  ac.epochs = 2;
  ac.batch = 12;
  auto arec = train<D>(ac, seq);
  REQUIRE(arec.epochs.size() == 2);
  REQUIRE(std::isfinite(arec.epochs.back().train_loss));
}

TEST_CASE("patch placement trains and shrinks spatial activations") {
  Dataset<D> img = gen_blobs<D>(3, 64, 30, 4, 0.2);  // 8x8 images
  TrainConfig pc;
  pc.model.kind = ModelKind::resblock;
  pc.model.channels = 4;
  pc.model.expanded = 8;
  pc.model.placement = BlockPlacement::input_patch;
  pc.scheme.kind = SchemeKind::sliceout;
  pc.scheme.rate = 0.75;
  pc.epochs = 1;
  pc.batch = 12;
  auto rec = train<D>(pc, img);
  TrainConfig base = pc;
  base.scheme.kind = SchemeKind::none;
  base.scheme.rate = 0.0;
  auto ref = train<D>(base, img);
  REQUIRE(rec.epochs[0].peak_activation_bytes < ref.epochs[0].peak_activation_bytes);
}
