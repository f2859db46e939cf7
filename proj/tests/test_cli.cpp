// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the installed command line tool.

#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace std::string_literals;

namespace {

const std::string kCli = SLICEOUT_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string out_file =
      (std::filesystem::temp_directory_path() / ("cli_out_" + std::to_string(::getpid())))
          .string();
  const std::string cmd = kCli + " " + args + " > " + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  std::filesystem::remove(out_file);
  return r;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("sliceout_cli_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::vector<std::string> csv_without_scheme_and_time(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    // drop columns 2 (scheme), 3 (p) and 4 (step_time_ms)
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    std::string kept;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == 1 || i == 2 || i == 3) continue;
      kept += cells[i];
      kept += '|';
    }
    rows.push_back(kept);
  }
  return rows;
}

std::string blob_train_config(const std::string& scheme_kind, double rate,
                              const std::string& output) {
  std::ostringstream ss;
  ss << R"({
  "model": {"kind": "mlp", "hidden": [32, 32]},
  "scheme": {"kind": ")"
     << scheme_kind << R"(", "rate": )" << rate << R"(},
  "optimizer": {"kind": "adam", "learning_rate": 0.002},
  "epochs": 3, "batch": 20, "seed": 11,
  "dataset": {"kind": "synthetic-blobs", "classes": 4, "dim": 12, "n_per_class": 50},
  "output": ")"
     << output << R"("
})";
  return ss.str();
}

} // namespace

TEST_CASE("cost command reproduces the table arithmetic") {
  auto r = run_cli("cost --scheme controlled --b 128 --n 1024 --m 1024 --p 0.5");
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("extra_copy_elements      262144") != std::string::npos);
  REQUIRE(r.output.find("multiply_ops             33554432") != std::string::npos);

  auto z = run_cli("cost --scheme sliceout --b 128 --n 1024 --m 1024 --p 0");
  REQUIRE(z.exit_code == 0);
  REQUIRE(z.output.find("extra_copy_elements      0") != std::string::npos);

  auto co2 = run_cli("cost --scheme sliceout --co2 plain-speedup --speedup 0.41");
  REQUIRE(co2.exit_code == 0);
  REQUIRE(co2.output.find("0.4100") != std::string::npos);

  auto machines = run_cli("cost --scheme sliceout --co2 fewer-machines --memory-gain 0.23 --pool 4");
  REQUIRE(machines.exit_code == 0);
  REQUIRE(machines.output.find("0.2500") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
  REQUIRE(run_cli("bench --trials 1 --width 16 --batch 4").exit_code == 2);
  REQUIRE(run_cli("bench --schemes standard,nonsense --width 16 --batch 4").exit_code == 2);
  REQUIRE(run_cli("verify --suite bogus").exit_code == 2);
  REQUIRE(run_cli("nonexistent-command").exit_code == 2);
}

TEST_CASE("train: bad configs exit 2 with diagnostics, missing data exits 3") {
  TempDir dir;
  const auto cfg_path = dir.file("cfg.json");
  write_file(cfg_path, R"({
  "model": {"kind": "mlp"},
  "scheme": {"kind": "none"},
  "batch": 8,
  "dataset": {"kind": "synthetic-blobs"}
})");
  auto missing_epochs = run_cli("train " + cfg_path);
  REQUIRE(missing_epochs.exit_code == 2);
  REQUIRE(missing_epochs.output.find("epochs") != std::string::npos);

  write_file(cfg_path, R"({
  "model": {"kind": "mlp"},
  "scheme": {"kind": "none"},
  "epochs": 1, "batch": 8,
  "dataset": {"kind": "idx", "images": "/nonexistent/i", "labels": "/nonexistent/l"}
})");
  REQUIRE(run_cli("train " + cfg_path).exit_code == 3);

  REQUIRE(run_cli("train /nonexistent/config.json").exit_code == 3);
}

TEST_CASE("train writes metrics; p=0 sliceout matches scheme none byte for byte") {
  TempDir dir;
  const auto cfg_none = dir.file("none.json");
  const auto cfg_p0 = dir.file("p0.json");
  write_file(cfg_none, blob_train_config("none", 0.0, dir.file("run_none")));
  write_file(cfg_p0, blob_train_config("sliceout", 0.0, dir.file("run_p0")));

  auto a = run_cli("train " + cfg_none);
  REQUIRE(a.exit_code == 0);
  REQUIRE(a.output.find("final train accuracy") != std::string::npos);
  auto b = run_cli("train " + cfg_p0);
  REQUIRE(b.exit_code == 0);

  const auto rows_none = csv_without_scheme_and_time(dir.file("run_none.csv"));
  const auto rows_p0 = csv_without_scheme_and_time(dir.file("run_p0.csv"));
  REQUIRE(rows_none.size() == 4);  // header + 3 epochs
  REQUIRE(rows_none == rows_p0);

  // summary documents exist and parse
  std::ifstream summary(dir.file("run_none.json"));
  REQUIRE(summary.good());
}

TEST_CASE("SLICEOUT_SEED overrides the config seed") {
  TempDir dir;
  const auto cfg = dir.file("cfg.json");
  write_file(cfg, blob_train_config("none", 0.0, dir.file("a")));
  auto r1 = run_cli("train " + cfg);
  write_file(cfg, blob_train_config("none", 0.0, dir.file("b")));
  const std::string with_env = "SLICEOUT_SEED=99 " + kCli;
  const int status = std::system((with_env + " train " + cfg + " > /dev/null 2>&1").c_str());
  REQUIRE(WEXITSTATUS(status) == 0);
  const auto rows_a = csv_without_scheme_and_time(dir.file("a.csv"));
  const auto rows_b = csv_without_scheme_and_time(dir.file("b.csv"));
  REQUIRE(rows_a != rows_b);
}

TEST_CASE("verify subcommand: all suites pass, fault injection fails") {
  auto ok = run_cli("verify --suite all");
  REQUIRE(ok.exit_code == 0);
  REQUIRE(ok.output.find("all checks passed") != std::string::npos);

  REQUIRE(run_cli("verify --suite counts").exit_code == 0);
  REQUIRE(run_cli("verify --suite grads").exit_code == 0);

  auto fault = run_cli("verify --suite moments --inject-fault");
  REQUIRE(fault.exit_code == 1);
  REQUIRE(fault.output.find("FAIL") != std::string::npos);
}

TEST_CASE("bench on a small width reports all schemes relative to standard") {
  auto r = run_cli("bench --width 48 --batch 8 --p 0.5 --trials 3 --seed 4");
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.output.find("standard") != std::string::npos);
  REQUIRE(r.output.find("sliceout") != std::string::npos);
  REQUIRE(r.output.find("controlled") != std::string::npos);
  REQUIRE(r.output.find("100.0") != std::string::npos);
}
