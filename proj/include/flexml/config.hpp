// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexml/adc.hpp"
#include "flexml/analog.hpp"
#include "flexml/csv.hpp"
#include "flexml/errors.hpp"
#include "flexml/gating.hpp"
#include "flexml/hwcost.hpp"
#include "flexml/mlp.hpp"
#include "flexml/prune.hpp"
#include "flexml/synthetic.hpp"

namespace flexml::codesign {

struct TuneConfig {
  int trials = 0;  // 0: skip tuning
  double lambda_lo = 1e-5, lambda_hi = 1e-1;
  double gamma_end_lo = 0.05, gamma_end_hi = 1.0;
  double mu = 0.1;  // cost weight in the trial score
  int epochs = 15;  // abbreviated training length per trial
};

/// One structured file drives a whole run; CLI flags override single keys.
/// Units are explicit in the key names (seconds, hertz, millimeters squared).
struct RunConfig {
  uint64_t seed = 1;
  std::string output_dir = "out";
  double window_s = 1.0;
  int kfold = 5;

  // Dataset: exactly one of a CSV source or a synthetic spec.
  std::string csv_path;
  signal::CsvSchema csv_schema;
  std::optional<signal::SyntheticSpec> synthetic;

  mlp::TrainConfig train;
  double lambda = 1e-3;
  int warmup_epochs = 5;
  double gate_init_log_alpha = 2.2;
  gating::GammaSchedule gamma{2.0, 0.1, 50};
  std::vector<double> tau_list = {0.01, 0.05, 0.1, 0.2, 0.5};
  prune::SparsitySchedule sparsity;
  TuneConfig tune;

  nlohmann::json analog_overrides;  // applied on top of window-derived defaults
  adc::AdcConfig adc;
  hwcost::CostLut lut;

  void validate() const {
    if (!(window_s > 0.0)) throw ConfigError("config: window_s must be positive");
    if (kfold < 2) throw ConfigError("config: kfold must be >= 2");
    if (csv_path.empty() == !synthetic.has_value())
      throw ConfigError("config: dataset needs exactly one of csv or synthetic");
    if (lambda < 0.0) throw ConfigError("config: lambda must be >= 0");
    if (warmup_epochs < 0) throw ConfigError("config: warmup_epochs must be >= 0");
    if (tau_list.empty()) throw ConfigError("config: tau_list must be non-empty");
    for (size_t i = 0; i < tau_list.size(); ++i) {
      if (tau_list[i] < 0.0 || tau_list[i] > 1.0)
        throw ConfigError("config: tau values must lie in [0,1]");
      if (i > 0 && !(tau_list[i] > tau_list[i - 1]))
        throw ConfigError("config: tau_list must be strictly increasing");
    }
    train.validate();
    adc.validate();
    lut.validate();
    (void)sparsity.per_round();
  }

  /// Analog configuration for the realized window geometry: defaults derive
  /// the integrator constant and the sum residual from the window, then any
  /// explicit overrides win.
  analog::AnalogConfig analog_config(double realized_window_s, int samples_per_window) const {
    analog::AnalogConfig c = analog::AnalogConfig::defaults(realized_window_s, samples_per_window);
    const auto& j = analog_overrides;
    if (j.is_object()) {
      const auto get = [&](const char* key, double& dst) {
        if (j.contains(key)) dst = j.at(key).get<double>();
      };
      get("v_sig_lo", c.v_sig_lo);
      get("v_sig_hi", c.v_sig_hi);
      // Reset levels track the signal range unless stated outright.
      c.v_l = c.v_sig_lo;
      c.v_h = c.v_sig_hi;
      c.v_ms = 0.5 * (c.v_sig_lo + c.v_sig_hi);
      get("v_th", c.v_th);
      get("leak_rate", c.leak_rate);
      get("rc_product", c.rc_product);
      if (j.contains("gain_n")) {
        c.gain_n = j.at("gain_n").get<double>();
        c.residual_scale = samples_per_window / c.gain_n;
      }
      get("residual_scale", c.residual_scale);
      get("swing_lo", c.swing_lo);
      get("swing_hi", c.swing_hi);
      get("v_l", c.v_l);
      get("v_h", c.v_h);
      get("v_ms", c.v_ms);
    }
    c.validate();
    return c;
  }

  signal::Dataset load_dataset() const {
    if (synthetic.has_value()) return signal::generate_synthetic(*synthetic, seed);
    return signal::load_csv(csv_path, csv_schema);
  }

  static RunConfig from_json(const nlohmann::json& j);

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("config parse: ") + e.what());
    }
    return from_json(j);
  }
};

inline RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig cfg;
  try {
    for (const auto& [key, _] : j.items()) {
      static const char* known[] = {"seed",     "output_dir", "window_s", "kfold",
                                    "dataset",  "train",      "lambda",   "warmup_epochs",
                                    "gate_init_log_alpha",    "gamma",    "tau_list",
                                    "sparsity", "tune",       "analog",   "adc",
                                    "cost_lut"};
      bool ok = false;
      for (const char* k : known) ok |= key == k;
      if (!ok) throw ConfigError("config: unknown key '" + key + "'");
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("window_s")) cfg.window_s = j.at("window_s").get<double>();
    if (j.contains("kfold")) cfg.kfold = j.at("kfold").get<int>();

    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("csv")) {
        const auto& c = d.at("csv");
        cfg.csv_path = c.at("path").get<std::string>();
        cfg.csv_schema.sample_rate_hz = c.at("sample_rate_hz").get<double>();
        if (c.contains("subject_column"))
          cfg.csv_schema.subject_column = c.at("subject_column").get<std::string>();
        if (c.contains("label_column"))
          cfg.csv_schema.label_column = c.at("label_column").get<std::string>();
        if (c.contains("channels"))
          cfg.csv_schema.channels = c.at("channels").get<std::vector<std::string>>();
      }
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        signal::SyntheticSpec spec;
        if (s.contains("num_subjects")) spec.num_subjects = s.at("num_subjects").get<int>();
        if (s.contains("num_channels")) spec.num_channels = s.at("num_channels").get<int>();
        if (s.contains("sample_rate_hz"))
          spec.sample_rate_hz = s.at("sample_rate_hz").get<double>();
        if (s.contains("duration_s")) spec.duration_s = s.at("duration_s").get<double>();
        if (s.contains("num_classes")) spec.num_classes = s.at("num_classes").get<int>();
        if (s.contains("window_s")) spec.window_s = s.at("window_s").get<double>();
        if (s.contains("informative")) {
          for (const auto& f : s.at("informative"))
            spec.informative.push_back(
                {f.at("channel").get<int>(),
                 signal::feature_kind_from_string(f.at("kind").get<std::string>())});
        }
        cfg.synthetic = spec;
      }
    }

    if (j.contains("train")) {
      const auto& t = j.at("train");
      const auto get = [&](const char* key, auto& dst) {
        if (t.contains(key)) dst = t.at(key).get<std::decay_t<decltype(dst)>>();
      };
      get("lr", cfg.train.lr);
      get("epochs", cfg.train.epochs);
      get("retrain_epochs", cfg.train.retrain_epochs);
      get("beta1", cfg.train.beta1);
      get("beta2", cfg.train.beta2);
      get("adam_eps", cfg.train.adam_eps);
      get("patience", cfg.train.patience);
      get("batch_size", cfg.train.batch_size);
      get("val_fraction", cfg.train.val_fraction);
      get("hidden", cfg.train.hidden);
      get("input_bits", cfg.train.input_bits);
      get("weight_bits", cfg.train.weight_bits);
    }
    cfg.train.seed = cfg.seed;

    if (j.contains("lambda")) cfg.lambda = j.at("lambda").get<double>();
    if (j.contains("warmup_epochs")) cfg.warmup_epochs = j.at("warmup_epochs").get<int>();
    if (j.contains("gate_init_log_alpha"))
      cfg.gate_init_log_alpha = j.at("gate_init_log_alpha").get<double>();
    if (j.contains("gamma")) {
      const auto& g = j.at("gamma");
      if (g.contains("start")) cfg.gamma.start = g.at("start").get<double>();
      if (g.contains("end")) cfg.gamma.end = g.at("end").get<double>();
    }
    cfg.gamma.total_epochs = cfg.train.epochs;
    if (j.contains("tau_list")) cfg.tau_list = j.at("tau_list").get<std::vector<double>>();
    if (j.contains("sparsity")) {
      const auto& s = j.at("sparsity");
      if (s.contains("target")) cfg.sparsity.target = s.at("target").get<double>();
      if (s.contains("rounds")) cfg.sparsity.rounds = s.at("rounds").get<int>();
      if (s.contains("levels")) cfg.sparsity.levels = s.at("levels").get<std::vector<double>>();
    }
    if (j.contains("tune")) {
      const auto& t = j.at("tune");
      if (t.contains("trials")) cfg.tune.trials = t.at("trials").get<int>();
      if (t.contains("lambda_range")) {
        cfg.tune.lambda_lo = t.at("lambda_range").at(0).get<double>();
        cfg.tune.lambda_hi = t.at("lambda_range").at(1).get<double>();
      }
      if (t.contains("gamma_end_range")) {
        cfg.tune.gamma_end_lo = t.at("gamma_end_range").at(0).get<double>();
        cfg.tune.gamma_end_hi = t.at("gamma_end_range").at(1).get<double>();
      }
      if (t.contains("mu")) cfg.tune.mu = t.at("mu").get<double>();
      if (t.contains("epochs")) cfg.tune.epochs = t.at("epochs").get<int>();
    }
    if (j.contains("analog")) cfg.analog_overrides = j.at("analog");
    if (j.contains("adc")) {
      const auto& a = j.at("adc");
      if (a.contains("n_bits")) cfg.adc.n_bits = a.at("n_bits").get<int>();
      if (a.contains("v_dac_lo")) cfg.adc.v_dac_lo = a.at("v_dac_lo").get<double>();
      if (a.contains("v_dac_hi")) cfg.adc.v_dac_hi = a.at("v_dac_hi").get<double>();
      if (a.contains("t_conv_s")) cfg.adc.t_conv_s = a.at("t_conv_s").get<double>();
    }
    if (j.contains("cost_lut")) {
      if (j.at("cost_lut").is_string())
        cfg.lut = hwcost::load_cost_lut(j.at("cost_lut").get<std::string>());
      else
        cfg.lut = j.at("cost_lut").get<hwcost::CostLut>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace flexml::codesign
