// Copyright (c) 2026 The SliceOut Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sliceout/trainer.hpp"

namespace sliceout {

struct DatasetConfig {
  enum class Kind { blobs, idx } kind = Kind::blobs;
  // synthetic-blobs
  std::size_t classes = 10;
  std::size_t dim = 64;
  std::size_t n_per_class = 500;
  double spread = 0.3;
  // idx
  std::string images, labels, test_images, test_labels;
};

struct ExperimentConfig {
  TrainConfig train;
  DatasetConfig dataset;
  std::string output = "metrics";
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool known = false;
    for (const auto& a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) throw config_error("unknown key '" + key + "' in " + where);
  }
}

inline const json& require_field(const json& obj, const std::string& key,
                                 const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw config_error("missing required field '" + key + "' in " + where);
  }
  return *it;
}

template <typename V>
V get_or(const json& obj, const std::string& key, V fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  return it->template get<V>();
}

inline SchemeKind parse_scheme_kind(const std::string& s) {
  if (s == "none") return SchemeKind::none;
  if (s == "standard") return SchemeKind::standard;
  if (s == "controlled") return SchemeKind::controlled;
  if (s == "sliceout") return SchemeKind::sliceout;
  throw config_error("unknown scheme kind '" + s + "'");
}

inline Normalization parse_normalization(const std::string& s) {
  if (s == "flow") return Normalization::flow;
  if (s == "probabilistic") return Normalization::probabilistic;
  throw config_error("unknown normalization '" + s + "'");
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "mlp") return ModelKind::mlp;
  if (s == "resblock") return ModelKind::resblock;
  if (s == "attention") return ModelKind::attention;
  throw config_error("unknown model kind '" + s + "'");
}

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd_momentum" || s == "sgd") return OptimizerKind::sgd_momentum;
  if (s == "adam") return OptimizerKind::adam;
  throw config_error("unknown optimizer kind '" + s + "'");
}

inline BlockPlacement parse_placement(const std::string& s) {
  if (s == "first-conv") return BlockPlacement::first_conv;
  if (s == "input-patch") return BlockPlacement::input_patch;
  throw config_error("unknown placement '" + s + "'");
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using detail::get_or;
  using detail::require_field;
  if (!j.is_object()) throw config_error("config root must be an object");
  detail::reject_unknown_keys(j,
                              {"model", "scheme", "optimizer", "epochs", "batch", "seed",
                               "sliceout_cutoff_fraction", "precision", "dataset", "output"},
                              "config");
  ExperimentConfig cfg;

  const auto& jm = require_field(j, "model", "config");
  detail::reject_unknown_keys(jm,
                              {"kind", "hidden", "channels", "expanded", "placement", "seq_len",
                               "model_dim", "heads", "ff_dim"},
                              "model");
  cfg.train.model.kind =
      detail::parse_model_kind(require_field(jm, "kind", "model").get<std::string>());
  cfg.train.model.hidden =
      get_or<std::vector<std::size_t>>(jm, "hidden", cfg.train.model.hidden);
  cfg.train.model.channels = get_or<std::size_t>(jm, "channels", cfg.train.model.channels);
  cfg.train.model.expanded = get_or<std::size_t>(jm, "expanded", cfg.train.model.expanded);
  cfg.train.model.placement =
      detail::parse_placement(get_or<std::string>(jm, "placement", "first-conv"));
  cfg.train.model.seq_len = get_or<std::size_t>(jm, "seq_len", cfg.train.model.seq_len);
  cfg.train.model.model_dim = get_or<std::size_t>(jm, "model_dim", cfg.train.model.model_dim);
  cfg.train.model.heads = get_or<std::size_t>(jm, "heads", cfg.train.model.heads);
  cfg.train.model.ff_dim = get_or<std::size_t>(jm, "ff_dim", cfg.train.model.ff_dim);

  const auto& js = require_field(j, "scheme", "config");
  detail::reject_unknown_keys(js, {"kind", "rate", "normalization", "delayed", "seed"}, "scheme");
  cfg.train.scheme.kind =
      detail::parse_scheme_kind(require_field(js, "kind", "scheme").get<std::string>());
  cfg.train.scheme.rate = get_or<double>(js, "rate", 0.0);
  if (cfg.train.scheme.rate < 0.0 || cfg.train.scheme.rate >= 1.0) {
    throw config_error("scheme rate must lie in [0, 1)");
  }
  cfg.train.scheme.normalization =
      detail::parse_normalization(get_or<std::string>(js, "normalization", "probabilistic"));
  cfg.train.scheme.delayed = get_or<bool>(js, "delayed", false);
  cfg.train.scheme.seed = get_or<std::uint64_t>(js, "seed", 0);

  if (auto it = j.find("optimizer"); it != j.end()) {
    const auto& jo = *it;
    detail::reject_unknown_keys(jo,
                                {"kind", "learning_rate", "momentum", "dampening",
                                 "weight_decay", "beta1", "beta2", "epsilon"},
                                "optimizer");
    cfg.train.optimizer.kind =
        detail::parse_optimizer_kind(get_or<std::string>(jo, "kind", "adam"));
    cfg.train.optimizer.learning_rate =
        get_or<double>(jo, "learning_rate", cfg.train.optimizer.learning_rate);
    cfg.train.optimizer.momentum = get_or<double>(jo, "momentum", cfg.train.optimizer.momentum);
    cfg.train.optimizer.dampening = get_or<double>(jo, "dampening", cfg.train.optimizer.dampening);
    cfg.train.optimizer.weight_decay =
        get_or<double>(jo, "weight_decay", cfg.train.optimizer.weight_decay);
    cfg.train.optimizer.beta1 = get_or<double>(jo, "beta1", cfg.train.optimizer.beta1);
    cfg.train.optimizer.beta2 = get_or<double>(jo, "beta2", cfg.train.optimizer.beta2);
    cfg.train.optimizer.epsilon = get_or<double>(jo, "epsilon", cfg.train.optimizer.epsilon);
  }

  cfg.train.epochs = require_field(j, "epochs", "config").get<std::size_t>();
  cfg.train.batch = require_field(j, "batch", "config").get<std::size_t>();
  cfg.train.seed = get_or<std::uint64_t>(j, "seed", 1);
  // Block and attention runs turn the scheme off for the last tenth of
  // training by default; plain MLP runs keep it on throughout.
  const double default_cutoff = cfg.train.model.kind == ModelKind::mlp ? 0.0 : 0.1;
  cfg.train.sliceout_cutoff_fraction = get_or<double>(j, "sliceout_cutoff_fraction", default_cutoff);
  if (cfg.train.sliceout_cutoff_fraction < 0.0 || cfg.train.sliceout_cutoff_fraction > 1.0) {
    throw config_error("sliceout_cutoff_fraction must lie in [0, 1]");
  }
  const std::string precision = get_or<std::string>(j, "precision", "f64");
  if (precision == "f32") {
    cfg.train.precision = Precision::f32;
  } else if (precision == "f64") {
    cfg.train.precision = Precision::f64;
  } else {
    throw config_error("precision must be 'f32' or 'f64'");
  }

  const auto& jd = require_field(j, "dataset", "config");
  detail::reject_unknown_keys(jd,
                              {"kind", "classes", "dim", "n_per_class", "spread", "images",
                               "labels", "test_images", "test_labels"},
                              "dataset");
  const std::string dkind = require_field(jd, "kind", "dataset").get<std::string>();
  if (dkind == "synthetic-blobs") {
    cfg.dataset.kind = DatasetConfig::Kind::blobs;
    cfg.dataset.classes = get_or<std::size_t>(jd, "classes", cfg.dataset.classes);
    cfg.dataset.dim = get_or<std::size_t>(jd, "dim", cfg.dataset.dim);
    cfg.dataset.n_per_class = get_or<std::size_t>(jd, "n_per_class", cfg.dataset.n_per_class);
    cfg.dataset.spread = get_or<double>(jd, "spread", cfg.dataset.spread);
  } else if (dkind == "idx") {
    cfg.dataset.kind = DatasetConfig::Kind::idx;
    cfg.dataset.images = require_field(jd, "images", "dataset").get<std::string>();
    cfg.dataset.labels = require_field(jd, "labels", "dataset").get<std::string>();
    cfg.dataset.test_images = get_or<std::string>(jd, "test_images", "");
    cfg.dataset.test_labels = get_or<std::string>(jd, "test_labels", "");
  } else {
    throw config_error("unknown dataset kind '" + dkind + "'");
  }

  cfg.output = get_or<std::string>(j, "output", cfg.output);
  return cfg;
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  nlohmann::json jm;
  jm["kind"] = to_string(cfg.train.model.kind);
  switch (cfg.train.model.kind) {
    case ModelKind::mlp:
      jm["hidden"] = cfg.train.model.hidden;
      break;
    case ModelKind::resblock:
      jm["channels"] = cfg.train.model.channels;
      jm["expanded"] = cfg.train.model.expanded;
      jm["placement"] = cfg.train.model.placement == BlockPlacement::first_conv ? "first-conv"
                                                                                : "input-patch";
      break;
    case ModelKind::attention:
      jm["seq_len"] = cfg.train.model.seq_len;
      jm["model_dim"] = cfg.train.model.model_dim;
      jm["heads"] = cfg.train.model.heads;
      jm["ff_dim"] = cfg.train.model.ff_dim;
      break;
  }
  j["model"] = jm;

  nlohmann::json js;
  js["kind"] = to_string(cfg.train.scheme.kind);
  js["rate"] = cfg.train.scheme.rate;
  js["normalization"] = to_string(cfg.train.scheme.normalization);
  js["delayed"] = cfg.train.scheme.delayed;
  if (cfg.train.scheme.seed != 0) js["seed"] = cfg.train.scheme.seed;
  j["scheme"] = js;

  nlohmann::json jo;
  jo["kind"] = cfg.train.optimizer.kind == OptimizerKind::adam ? "adam" : "sgd_momentum";
  jo["learning_rate"] = cfg.train.optimizer.learning_rate;
  jo["momentum"] = cfg.train.optimizer.momentum;
  jo["dampening"] = cfg.train.optimizer.dampening;
  jo["weight_decay"] = cfg.train.optimizer.weight_decay;
  jo["beta1"] = cfg.train.optimizer.beta1;
  jo["beta2"] = cfg.train.optimizer.beta2;
  jo["epsilon"] = cfg.train.optimizer.epsilon;
  j["optimizer"] = jo;

  j["epochs"] = cfg.train.epochs;
  j["batch"] = cfg.train.batch;
  j["seed"] = cfg.train.seed;
  j["sliceout_cutoff_fraction"] = cfg.train.sliceout_cutoff_fraction;
  j["precision"] = cfg.train.precision == Precision::f32 ? "f32" : "f64";

  nlohmann::json jd;
  if (cfg.dataset.kind == DatasetConfig::Kind::blobs) {
    jd["kind"] = "synthetic-blobs";
    jd["classes"] = cfg.dataset.classes;
    jd["dim"] = cfg.dataset.dim;
    jd["n_per_class"] = cfg.dataset.n_per_class;
    jd["spread"] = cfg.dataset.spread;
  } else {
    jd["kind"] = "idx";
    jd["images"] = cfg.dataset.images;
    jd["labels"] = cfg.dataset.labels;
    if (!cfg.dataset.test_images.empty()) {
      jd["test_images"] = cfg.dataset.test_images;
      jd["test_labels"] = cfg.dataset.test_labels;
    }
  }
  j["dataset"] = jd;
  j["output"] = cfg.output;
  return j;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config parse error in " + path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// Metrics output
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsHeader =
    "epoch,scheme,p,step_time_ms,peak_activation_bytes,copy_bytes,multiply_ops,train_loss,"
    "train_acc,test_acc";

struct MetricsRow {
  std::size_t epoch = 0;
  std::string scheme;
  double p = 0.0;
  double step_time_ms = 0.0;
  std::uint64_t peak_activation_bytes = 0;
  std::uint64_t copy_bytes = 0;
  std::uint64_t multiply_ops = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string metrics_row_to_csv(const MetricsRow& row) {
  std::string line = std::to_string(row.epoch) + "," + row.scheme + "," + format_double(row.p) +
                     "," + format_double(row.step_time_ms) + "," +
                     std::to_string(row.peak_activation_bytes) + "," +
                     std::to_string(row.copy_bytes) + "," + std::to_string(row.multiply_ops) +
                     "," + format_double(row.train_loss) + "," + format_double(row.train_acc) +
                     "," + format_double(row.test_acc);
  return line;
}

template <typename T>
std::vector<MetricsRow> metrics_rows_from_record(const RunRecord<T>& record,
                                                 const SliceScheme& scheme) {
  std::vector<MetricsRow> rows;
  for (const auto& em : record.epochs) {
    MetricsRow row;
    row.epoch = em.epoch;
    row.scheme = to_string(scheme.kind);
    row.p = scheme.rate;
    row.step_time_ms = em.median_step_time_ms;
    row.peak_activation_bytes = em.peak_activation_bytes;
    row.copy_bytes = em.copy_bytes;
    row.multiply_ops = em.multiply_ops;
    row.train_loss = em.train_loss;
    row.train_acc = em.train_acc;
    row.test_acc = em.test_acc;
    rows.push_back(row);
  }
  return rows;
}

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write metrics file: " + path);
  out << kMetricsHeader << "\n";
  for (const auto& row : rows) out << metrics_row_to_csv(row) << "\n";
  if (!out) throw io_error("failed writing metrics file: " + path);
}

template <typename T>
nlohmann::json run_summary_json(const ExperimentConfig& cfg, const RunRecord<T>& record) {
  nlohmann::json j;
  j["config"] = experiment_config_to_json(cfg);
  j["epochs_run"] = record.epochs.size();
  j["final_train_acc"] = record.final_train_acc;
  j["final_test_acc"] = record.final_test_acc;
  if (!record.epochs.empty()) {
    j["final_train_loss"] = record.epochs.back().train_loss;
    j["peak_activation_bytes"] = record.epochs.back().peak_activation_bytes;
    j["median_step_time_ms"] = record.epochs.back().median_step_time_ms;
  }
  std::size_t slice_samples = 0;
  for (const auto& em : record.epochs) slice_samples += em.slice_samples;
  j["slice_samples"] = slice_samples;
  return j;
}

} // namespace sliceout
