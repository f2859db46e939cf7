// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sliceout/costmodel.hpp"

using namespace sliceout;

TEST_CASE("cost table worked examples") {
  const auto controlled = table1_costs(SchemeKind::controlled, 128, 1024, 1024, 0.5);
  REQUIRE(controlled.extra_copy_elements == 262144);
  REQUIRE(controlled.weight_manipulation_rw == 262144);
  REQUIRE(controlled.multiply_ops == 33554432);
  REQUIRE(controlled.activation_elements == 512u * 128);

  const auto so = table1_costs(SchemeKind::sliceout, 128, 1024, 1024, 0.5);
  REQUIRE(so.extra_copy_elements == 0);
  REQUIRE(so.weight_manipulation_rw == 0);
  REQUIRE(so.multiply_ops == 33554432);
  REQUIRE(so.activation_elements == 65536);

  const auto standard = table1_costs(SchemeKind::standard, 128, 1024, 1024, 0.5);
  REQUIRE(standard.multiply_ops == 128ull * 1024 * 1024);
  REQUIRE(standard.activation_elements == 1024u * 128);
  REQUIRE(standard.extra_copy_elements == 0);
}

TEST_CASE("p = 0 makes every scheme cost the same as the dense baseline") {
  for (auto scheme : {SchemeKind::none, SchemeKind::standard, SchemeKind::controlled,
                      SchemeKind::sliceout}) {
    const auto r = table1_costs(scheme, 16, 48, 32, 0.0);
    REQUIRE(r.multiply_ops == 16ull * 48 * 32);
    REQUIRE(r.activation_elements == 32u * 16);
    REQUIRE(r.extra_copy_elements == 0);
  }
}

TEST_CASE("scheme none ignores the requested rate") {
  const auto r = table1_costs(SchemeKind::none, 8, 64, 64, 0.7);
  REQUIRE(r.rate == 0.0);
  REQUIRE(r.multiply_ops == 8ull * 64 * 64);
}

TEST_CASE("sliceout and controlled agree on multiplies; only controlled copies") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> dim(2, 512);
  std::uniform_real_distribution<double> rate(0.05, 0.9);
  for (int i = 0; i < 200; ++i) {
    const std::size_t b = dim(rng), n = dim(rng), m = dim(rng);
    const double p = rate(rng);
    const auto so = table1_costs(SchemeKind::sliceout, b, n, m, p);
    const auto ctl = table1_costs(SchemeKind::controlled, b, n, m, p);
    REQUIRE(so.multiply_ops == ctl.multiply_ops);
    REQUIRE(so.extra_copy_elements == 0);
    REQUIRE(ctl.extra_copy_elements > 0);
    REQUIRE(so.activation_elements == ctl.activation_elements);
    REQUIRE(so.multiply_ops == std::uint64_t(b) * slice_width(n, p) * slice_width(m, p));
  }
}

TEST_CASE("rate validation") {
  REQUIRE_THROWS_AS(table1_costs(SchemeKind::sliceout, 1, 8, 8, 1.0), rate_error);
  REQUIRE_THROWS_AS(table1_costs(SchemeKind::sliceout, 1, 8, 8, -0.2), rate_error);
  REQUIRE_THROWS_AS(table1_costs(SchemeKind::sliceout, 0, 8, 8, 0.5), rate_error);
}

TEST_CASE("co2 savings accounting") {
  Co2Inputs in;
  in.memory_gain_fraction = 0.23;
  in.machine_pool = 4;
  REQUIRE_THAT(co2_savings(Co2Mode::fewer_machines, in), Catch::Matchers::WithinAbs(0.25, 1e-15));

  in.speedup_fraction = 0.41;
  REQUIRE_THAT(co2_savings(Co2Mode::plain_speedup, in), Catch::Matchers::WithinAbs(0.41, 1e-15));
  REQUIRE_THAT(co2_savings(Co2Mode::bigger_batch, in), Catch::Matchers::WithinAbs(0.41, 1e-15));

  Co2Inputs zero;
  REQUIRE(co2_savings(Co2Mode::plain_speedup, zero) == 0.0);
  REQUIRE(co2_savings(Co2Mode::fewer_machines, zero) == 0.0);

  Co2Inputs bad;
  bad.speedup_fraction = 1.2;
  REQUIRE_THROWS_AS(co2_savings(Co2Mode::plain_speedup, bad), rate_error);
}

TEST_CASE("fewer machines never drops below one machine") {
  Co2Inputs in;
  in.memory_gain_fraction = 0.9;
  in.machine_pool = 2;
  // floor(2 * 0.1) = 0, clamped to 1 machine
  REQUIRE_THAT(co2_savings(Co2Mode::fewer_machines, in), Catch::Matchers::WithinAbs(0.5, 1e-15));
}
