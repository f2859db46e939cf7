// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end: train / bench / verify / cost.
// Exit codes: 0 success, 1 assertion or validation failure,
//             2 usage or config error, 3 IO error.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sliceout/sliceout.hpp"

namespace {

using namespace sliceout;

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

std::uint64_t effective_seed(std::uint64_t configured) {
  if (const char* env = std::getenv("SLICEOUT_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return configured;
}

SchemeKind scheme_from_name(const std::string& name) {
  if (name == "none") return SchemeKind::none;
  if (name == "standard") return SchemeKind::standard;
  if (name == "controlled") return SchemeKind::controlled;
  if (name == "sliceout") return SchemeKind::sliceout;
  throw usage_error("unknown scheme '" + name + "'");
}

template <typename T>
int run_train_typed(const ExperimentConfig& cfg) {
  Dataset<T> data;
  if (cfg.dataset.kind == DatasetConfig::Kind::blobs) {
    data = gen_blobs<T>(cfg.dataset.classes, cfg.dataset.dim, cfg.dataset.n_per_class,
                        cfg.train.seed, cfg.dataset.spread);
  } else {
    data = load_idx<T>(cfg.dataset.images, cfg.dataset.labels, cfg.dataset.test_images,
                       cfg.dataset.test_labels);
  }
  RunRecord<T> record = train<T>(cfg.train, data);
  const auto rows = metrics_rows_from_record(record, cfg.train.scheme);
  write_metrics_csv(cfg.output + ".csv", rows);
  {
    std::ofstream out(cfg.output + ".json");
    if (!out) throw io_error("cannot write summary file: " + cfg.output + ".json");
    out << run_summary_json(cfg, record).dump(2) << "\n";
  }
  std::printf("final train accuracy %.4f, test accuracy %.4f\n", record.final_train_acc,
              record.final_test_acc);
  std::printf("metrics written to %s.csv and %s.json\n", cfg.output.c_str(), cfg.output.c_str());
  return kExitOk;
}

int run_train(const std::string& config_path) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  cfg.train.seed = effective_seed(cfg.train.seed);
  if (cfg.train.precision == Precision::f32) return run_train_typed<float>(cfg);
  return run_train_typed<double>(cfg);
}

template <typename T>
int run_bench_typed(std::size_t width, std::size_t batch, double p,
                    const std::vector<SchemeKind>& schemes, std::size_t trials,
                    std::uint64_t seed, const std::string& out_path) {
  BenchResult result = bench_compare<T>(width, batch, p, schemes, trials, seed);
  std::printf("mlp 784-%zux3-10, batch %zu, p=%.2f, %zu trials (standard dropout = 100%%)\n",
              result.width, result.batch, result.rate, result.trials);
  std::printf("%-12s %14s %10s %16s %10s\n", "scheme", "step_ms", "time_%", "peak_bytes",
              "mem_%");
  std::string file_text;
  for (const auto& row : result.rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %14.3f %10.1f %16llu %10.1f",
                  to_string(row.scheme).c_str(), row.median_step_ms, row.rel_time_pct,
                  static_cast<unsigned long long>(row.peak_activation_bytes), row.rel_peak_pct);
    std::printf("%s\n", line);
    file_text += line;
    file_text += "\n";
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw io_error("cannot write bench output: " + out_path);
    out << file_text;
  }
  return kExitOk;
}

int run_verify(const std::string& suite, bool inject_fault, std::uint64_t seed) {
  bool all_ok = true;
  const bool moments = suite == "moments" || suite == "all";
  const bool grads = suite == "grads" || suite == "all";
  const bool counts = suite == "counts" || suite == "all";
  if (!moments && !grads && !counts) {
    throw usage_error("unknown suite '" + suite + "' (moments|grads|counts|all)");
  }

  if (moments) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> width_dist(4, 32);
    std::uniform_int_distribution<int> rate_dist(1, 5);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      LinearStackConfig cfg;
      const std::size_t n = width_dist(rng);
      const std::size_t m = width_dist(rng);
      cfg.widths = {n, m};
      cfg.sliced = {true};
      cfg.rate = 0.1 * rate_dist(rng);
      cfg.seed = rng();
      const auto res = check_first_moment(cfg, Normalization::probabilistic, inject_fault);
      worst = std::max(worst, res.max_first_moment_deviation);
    }
    {
      LinearStackConfig two;
      two.widths = {6, 8, 7};
      two.sliced = {true, true};
      two.rate = 0.4;
      const auto res = check_first_moment(two, Normalization::probabilistic, inject_fault);
      worst = std::max(worst, res.max_first_moment_deviation);
    }
    const bool ok = worst < 1e-9;
    std::printf("[moments] first moment (probabilistic, 21 configs): max dev %.3g  %s\n", worst,
                ok ? "PASS" : "FAIL");
    SecondMomentConfig sm;
    sm.in_width = sm.out_width = 16;
    sm.rate = 0.375;
    sm.slice_input = false;
    const auto res2 = check_second_moment(sm);
    const bool ok2 = res2.band_second_moment_deviation < 0.05;
    std::printf("[moments] second moment middle band (16,10): max rel dev %.3g  %s "
                "(edges %.3g, reported only)\n",
                res2.band_second_moment_deviation, ok2 ? "PASS" : "FAIL",
                res2.edge_second_moment_deviation);
    all_ok = all_ok && ok && ok2;
  }

  if (grads) {
    const auto report = check_gradients(seed);
    auto line = [&](const char* name, double err, double tol) {
      const bool ok = err < tol;
      std::printf("[grads] %-18s rel err %.3g (tol %.0e)  %s\n", name, err, tol,
                  ok ? "PASS" : "FAIL");
      all_ok = all_ok && ok;
    };
    line("unsliced dense", report.unsliced_dense, 1e-6);
    line("sliced dense", report.sliced_dense, 1e-6);
    line("conv block", report.conv_block, 1e-5);
    line("sliced attention", report.sliced_attention, 1e-5);
  }

  if (counts) {
    for (const auto& c : check_counts(seed)) {
      std::printf("[counts] %-44s %s (%s)\n", c.name.c_str(), c.pass ? "PASS" : "FAIL",
                  c.detail.c_str());
      all_ok = all_ok && c.pass;
    }
  }

  std::printf("verify: %s\n", all_ok ? "all checks passed" : "FAILURES present");
  return all_ok ? kExitOk : kExitAssertion;
}

int run_cost(const std::string& scheme_name, std::size_t b, std::size_t n, std::size_t m,
             double p, const std::string& co2_mode, double speedup, double memory_gain,
             std::size_t pool) {
  const CostReport r = table1_costs(scheme_from_name(scheme_name), b, n, m, p);
  std::printf("scheme=%s b=%zu n=%zu m=%zu p=%.3f\n", to_string(r.scheme).c_str(), r.batch,
              r.in_width, r.out_width, r.rate);
  std::printf("weight_manipulation_rw   %llu\n",
              static_cast<unsigned long long>(r.weight_manipulation_rw));
  std::printf("extra_copy_elements      %llu\n",
              static_cast<unsigned long long>(r.extra_copy_elements));
  std::printf("multiply_ops             %llu\n", static_cast<unsigned long long>(r.multiply_ops));
  std::printf("activation_elements      %llu\n",
              static_cast<unsigned long long>(r.activation_elements));
  if (!co2_mode.empty()) {
    Co2Mode mode;
    if (co2_mode == "fewer-machines") {
      mode = Co2Mode::fewer_machines;
    } else if (co2_mode == "bigger-batch") {
      mode = Co2Mode::bigger_batch;
    } else if (co2_mode == "plain-speedup") {
      mode = Co2Mode::plain_speedup;
    } else {
      throw usage_error("unknown co2 mode '" + co2_mode + "'");
    }
    Co2Inputs in;
    in.speedup_fraction = speedup;
    in.memory_gain_fraction = memory_gain;
    in.machine_pool = pool;
    std::printf("co2_savings (%s)         %.4f\n", co2_mode.c_str(), co2_savings(mode, in));
  }
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"SliceOut: contiguous-slice dropout training library"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  train_cmd->add_option("config", config_path, "experiment config (JSON)")->required();

  std::size_t width = 2048, batch = 256, trials = 3, pool = 4;
  double rate = 0.5, speedup = 0.0, memory_gain = 0.0;
  std::string schemes_arg = "standard,sliceout,controlled";
  std::string precision = "f32";
  std::string bench_model = "mlp";
  std::string bench_out;
  std::uint64_t seed = 1;
  auto* bench_cmd = app.add_subcommand("bench", "compare schemes on the reference MLP");
  bench_cmd->add_option("--model", bench_model, "model family (mlp)");
  bench_cmd->add_option("--width", width, "hidden width (default 2048)");
  bench_cmd->add_option("--batch", batch, "batch size (default 256)");
  bench_cmd->add_option("--p", rate, "dropout rate (default 0.5)");
  bench_cmd->add_option("--schemes", schemes_arg, "comma list incl. standard");
  bench_cmd->add_option("--trials", trials, "timed trials per scheme (min 3)");
  bench_cmd->add_option("--seed", seed, "rng seed");
  bench_cmd->add_option("--precision", precision, "f32 (default) or f64");
  bench_cmd->add_option("--out", bench_out, "also write the table to a file");

  std::string suite = "all";
  bool inject_fault = false;
  auto* verify_cmd = app.add_subcommand("verify", "run the verification suites");
  verify_cmd->add_option("--suite", suite, "moments|grads|counts|all");
  verify_cmd->add_option("--seed", seed, "rng seed");
  verify_cmd->add_flag("--inject-fault", inject_fault, "")->group("");  // harness self test

  std::string cost_scheme = "sliceout", co2_mode;
  std::size_t cb = 128, cn = 1024, cm = 1024;
  double cp = 0.5;
  auto* cost_cmd = app.add_subcommand("cost", "analytic per-layer cost report");
  cost_cmd->add_option("--scheme", cost_scheme, "none|standard|controlled|sliceout");
  cost_cmd->add_option("--b", cb, "batch size");
  cost_cmd->add_option("--n", cn, "input width");
  cost_cmd->add_option("--m", cm, "output width");
  cost_cmd->add_option("--p", cp, "dropout rate");
  cost_cmd->add_option("--co2", co2_mode, "fewer-machines|bigger-batch|plain-speedup");
  cost_cmd->add_option("--speedup", speedup, "measured speedup fraction");
  cost_cmd->add_option("--memory-gain", memory_gain, "measured memory gain fraction");
  cost_cmd->add_option("--pool", pool, "baseline machine count (default 4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(config_path);
    if (*bench_cmd) {
      if (trials < 3) throw usage_error("--trials must be at least 3");
      if (bench_model != "mlp") throw usage_error("bench supports --model mlp");
      std::vector<SchemeKind> schemes;
      std::string rest = schemes_arg;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        schemes.push_back(scheme_from_name(rest.substr(0, comma)));
        if (comma == std::string::npos) break;
        rest = rest.substr(comma + 1);
      }
      if (precision == "f64") {
        return run_bench_typed<double>(width, batch, rate, schemes, trials, seed, bench_out);
      }
      if (precision != "f32") throw usage_error("--precision must be f32 or f64");
      return run_bench_typed<float>(width, batch, rate, schemes, trials, seed, bench_out);
    }
    if (*verify_cmd) return run_verify(suite, inject_fault, seed);
    if (*cost_cmd) return run_cost(cost_scheme, cb, cn, cm, cp, co2_mode, speedup, memory_gain, pool);
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const usage_error& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const io_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const format_error& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitIo;
  } catch (const consistency_error& e) {
    std::fprintf(stderr, "consistency error: %s\n", e.what());
    return kExitIo;
  } catch (const error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitAssertion;
  }
  return kExitUsage;
}
