// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexml/adc.hpp"
#include "flexml/errors.hpp"
#include "flexml/mlp.hpp"
#include "flexml/signal.hpp"

namespace flexml::hwcost {

using signal::FeatureId;
using signal::FeatureKind;

struct CircuitCost {
  double area_mm2 = 0.0;
  double power_mw = 0.0;
};

/// Digital classifier cost coefficients. The classifier is fully parallel
/// and bespoke: one multiplier per surviving nonzero weight, an adder tree
/// per neuron, one activation register per neuron. Multipliers whose
/// hardwired coefficient is 0 or +/-2^k shrink under constant propagation;
/// the factors below are calibration knobs, not measured values.
struct MlpCostCoeffs {
  double area_per_bit_product_mm2 = 0.002;
  double area_per_adder_bit_mm2 = 0.004;
  double area_per_register_bit_mm2 = 0.003;
  double zero_code_factor = 0.0;
  double pow2_code_factor = 0.25;
  double power_density_mw_per_mm2 = 0.5;
  double fixed_overhead_mm2 = 0.01;  // control counters, decoder
  int latency_cycles = 3;            // feature load, MAC, activation
  int activation_bits = 8;
};

/// Area/power lookup for every system component. Feature entries are
/// per-circuit; the `sum_stage` entry covers only the scaling amplifier,
/// since a Sum output taps the Mean integrator of its channel. All feature
/// and classifier numbers shipped here are rough placeholders meant to be
/// replaced with measured values for a real process.
struct CostLut {
  CircuitCost feat_min{0.05, 0.01};
  CircuitCost feat_max{0.05, 0.01};
  CircuitCost feat_mean{0.40, 0.12};
  CircuitCost sum_stage{0.40, 0.12};
  CircuitCost adc{0.02, 0.0814};
  MlpCostCoeffs mlp;
  double clock_hz = 10000.0;
  double budget_ms = 20.0;
  bool power_gating = true;

  const CircuitCost& feature(FeatureKind k) const {
    switch (k) {
      case FeatureKind::min: return feat_min;
      case FeatureKind::max: return feat_max;
      case FeatureKind::mean: return feat_mean;
      case FeatureKind::sum: return sum_stage;
    }
    throw ConfigError("cost lut: unknown feature kind");
  }

  /// Hardware a feature needs when instantiated on its own. Sum drags in a
  /// Mean stage.
  double standalone_area(FeatureKind k) const {
    return k == FeatureKind::sum ? feat_mean.area_mm2 + sum_stage.area_mm2
                                 : feature(k).area_mm2;
  }

  void validate() const {
    for (const CircuitCost* c : {&feat_min, &feat_max, &feat_mean, &sum_stage, &adc}) {
      if (c->area_mm2 < 0.0 || c->power_mw < 0.0)
        throw ConfigError("cost lut: entries must be non-negative");
    }
    if (!(clock_hz > 0.0)) throw ConfigError("cost lut: clock_hz must be positive");
    if (mlp.latency_cycles < 1) throw ConfigError("cost lut: latency_cycles must be >= 1");
  }
};

// --- JSON (de)serialization ------------------------------------------------

inline void to_json(nlohmann::json& j, const CircuitCost& c) {
  j = {{"area_mm2", c.area_mm2}, {"power_mw", c.power_mw}};
}
inline void from_json(const nlohmann::json& j, CircuitCost& c) {
  c.area_mm2 = j.at("area_mm2").get<double>();
  c.power_mw = j.at("power_mw").get<double>();
}

inline void to_json(nlohmann::json& j, const CostLut& lut) {
  j = nlohmann::json{
      {"features",
       {{"min", lut.feat_min}, {"max", lut.feat_max}, {"mean", lut.feat_mean},
        {"sum_stage", lut.sum_stage}}},
      {"adc", lut.adc},
      {"mlp",
       {{"area_per_bit_product_mm2", lut.mlp.area_per_bit_product_mm2},
        {"area_per_adder_bit_mm2", lut.mlp.area_per_adder_bit_mm2},
        {"area_per_register_bit_mm2", lut.mlp.area_per_register_bit_mm2},
        {"zero_code_factor", lut.mlp.zero_code_factor},
        {"pow2_code_factor", lut.mlp.pow2_code_factor},
        {"power_density_mw_per_mm2", lut.mlp.power_density_mw_per_mm2},
        {"fixed_overhead_mm2", lut.mlp.fixed_overhead_mm2},
        {"latency_cycles", lut.mlp.latency_cycles},
        {"activation_bits", lut.mlp.activation_bits}}},
      {"clock_hz", lut.clock_hz},
      {"budget_ms", lut.budget_ms},
      {"power_gating", lut.power_gating}};
}

inline void from_json(const nlohmann::json& j, CostLut& lut) {
  const auto get = [](const nlohmann::json& o, const char* key, auto& dst) {
    if (o.contains(key)) dst = o.at(key).get<std::decay_t<decltype(dst)>>();
  };
  if (j.contains("features")) {
    const auto& f = j.at("features");
    get(f, "min", lut.feat_min);
    get(f, "max", lut.feat_max);
    get(f, "mean", lut.feat_mean);
    get(f, "sum_stage", lut.sum_stage);
    for (const auto& [key, _] : f.items()) {
      if (key != "min" && key != "max" && key != "mean" && key != "sum_stage")
        throw ConfigError("cost lut: unknown feature kind '" + key + "'");
    }
  }
  get(j, "adc", lut.adc);
  if (j.contains("mlp")) {
    const auto& m = j.at("mlp");
    get(m, "area_per_bit_product_mm2", lut.mlp.area_per_bit_product_mm2);
    get(m, "area_per_adder_bit_mm2", lut.mlp.area_per_adder_bit_mm2);
    get(m, "area_per_register_bit_mm2", lut.mlp.area_per_register_bit_mm2);
    get(m, "zero_code_factor", lut.mlp.zero_code_factor);
    get(m, "pow2_code_factor", lut.mlp.pow2_code_factor);
    get(m, "power_density_mw_per_mm2", lut.mlp.power_density_mw_per_mm2);
    get(m, "fixed_overhead_mm2", lut.mlp.fixed_overhead_mm2);
    get(m, "latency_cycles", lut.mlp.latency_cycles);
    get(m, "activation_bits", lut.mlp.activation_bits);
  }
  get(j, "clock_hz", lut.clock_hz);
  get(j, "budget_ms", lut.budget_ms);
  get(j, "power_gating", lut.power_gating);
  lut.validate();
}

inline CostLut load_cost_lut(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cost LUT '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cost LUT '" + path + "': " + e.what());
  }
  return j.get<CostLut>();
}

// ---------------------------------------------------------------------------
// Cost models
// ---------------------------------------------------------------------------

/// Per-gate area costs in canonical candidate order; feeds GateLayer::costs.
inline std::vector<double> feature_cost_vector(const std::vector<FeatureId>& order,
                                               const CostLut& lut) {
  std::vector<double> c;
  c.reserve(order.size());
  for (const FeatureId& f : order) c.push_back(lut.standalone_area(f.kind));
  return c;
}

struct MlpCost {
  double area_mm2 = 0.0;
  double multiplier_area_mm2 = 0.0;
  double adder_area_mm2 = 0.0;
  double register_area_mm2 = 0.0;
  double power_mw = 0.0;
  int latency_cycles = 0;
};

namespace detail {

inline bool is_pow2_code(int code) {
  const int a = std::abs(code);
  return a > 0 && (a & (a - 1)) == 0;
}

inline int ceil_log2(int n) {
  int bits = 0;
  int v = 1;
  while (v < n) {
    v <<= 1;
    ++bits;
  }
  return bits;
}

struct LayerTally {
  double mult_area = 0.0;
  double adder_area = 0.0;
  double reg_area = 0.0;
};

inline LayerTally tally_layer(const std::vector<int>& codes, const Matrix& mask, int rows,
                              int cols, int weight_bits, int in_bits,
                              const MlpCostCoeffs& k) {
  LayerTally t;
  for (int j = 0; j < cols; ++j) {  // one hardware neuron per column
    int products = 0;
    for (int i = 0; i < rows; ++i) {
      const size_t idx = static_cast<size_t>(i) * static_cast<size_t>(cols) +
                         static_cast<size_t>(j);
      if (mask.data[idx] == 0.0) continue;
      const int code = codes[idx];
      double factor = 1.0;
      if (code == 0)
        factor = k.zero_code_factor;
      else if (is_pow2_code(code))
        factor = k.pow2_code_factor;
      t.mult_area += k.area_per_bit_product_mm2 * weight_bits * in_bits * factor;
      if (code != 0) ++products;
    }
    // Bias adder always present; accumulator width grows with the tree depth.
    const int adders = std::max(products, 1);
    const int acc_bits = weight_bits + in_bits + ceil_log2(std::max(products + 1, 2));
    t.adder_area += adders * acc_bits * k.area_per_adder_bit_mm2;
    t.reg_area += k.activation_bits * k.area_per_register_bit_mm2;
  }
  return t;
}

}  // namespace detail

/// Area/power of the bespoke fully-parallel classifier for a quantized,
/// masked network.
inline MlpCost mlp_cost(const mlp::QuantizedModel& q, const Matrix& mask1, const Matrix& mask2,
                        const CostLut& lut) {
  const auto& k = lut.mlp;
  const auto t1 = detail::tally_layer(q.q1, mask1, q.arch.d, q.arch.hidden, q.weight_bits,
                                      q.input_bits, k);
  const auto t2 = detail::tally_layer(q.q2, mask2, q.arch.hidden, q.arch.classes, q.weight_bits,
                                      k.activation_bits, k);
  MlpCost c;
  c.multiplier_area_mm2 = t1.mult_area + t2.mult_area;
  c.adder_area_mm2 = t1.adder_area + t2.adder_area;
  c.register_area_mm2 = t1.reg_area + t2.reg_area;
  c.area_mm2 =
      k.fixed_overhead_mm2 + c.multiplier_area_mm2 + c.adder_area_mm2 + c.register_area_mm2;
  c.power_mw = c.area_mm2 * k.power_density_mw_per_mm2;
  c.latency_cycles = k.latency_cycles;
  return c;
}

struct CostReport {
  double area_analog_mm2 = 0.0;
  double area_adc_mm2 = 0.0;
  double area_classifier_mm2 = 0.0;
  double area_total_mm2 = 0.0;
  double power_analog_mw = 0.0;
  double power_adc_mw = 0.0;
  double power_classifier_mw = 0.0;
  double power_active_mw = 0.0;
  double latency_adc_ms = 0.0;
  double latency_mlp_ms = 0.0;
  double latency_total_ms = 0.0;
  double energy_uj = 0.0;
};

/// Aggregates the whole system for a hard feature selection. Latency covers
/// the post-window work (conversions then classifier cycles); energy uses
/// per-component active times when power gating is on. Sum shares its
/// channel's Mean integrator, so a selection holding both pays for one.
inline CostReport system_cost(const std::vector<FeatureId>& selection,
                              const mlp::QuantizedModel& q, const Matrix& mask1,
                              const Matrix& mask2, const adc::AdcConfig& adc_cfg,
                              const CostLut& lut, double window_s) {
  CostReport r;

  int num_channels = 0;
  for (const FeatureId& f : selection) num_channels = std::max(num_channels, f.channel + 1);
  for (int ch = 0; ch < num_channels; ++ch) {
    bool has_min = false, has_max = false, has_mean = false, has_sum = false;
    for (const FeatureId& f : selection) {
      if (f.channel != ch) continue;
      has_min |= f.kind == FeatureKind::min;
      has_max |= f.kind == FeatureKind::max;
      has_mean |= f.kind == FeatureKind::mean;
      has_sum |= f.kind == FeatureKind::sum;
    }
    if (has_min) {
      r.area_analog_mm2 += lut.feat_min.area_mm2;
      r.power_analog_mw += lut.feat_min.power_mw;
    }
    if (has_max) {
      r.area_analog_mm2 += lut.feat_max.area_mm2;
      r.power_analog_mw += lut.feat_max.power_mw;
    }
    if (has_mean || has_sum) {
      r.area_analog_mm2 += lut.feat_mean.area_mm2;
      r.power_analog_mw += lut.feat_mean.power_mw;
    }
    if (has_sum) {
      r.area_analog_mm2 += lut.sum_stage.area_mm2;
      r.power_analog_mw += lut.sum_stage.power_mw;
    }
  }

  if (!selection.empty()) {
    r.area_adc_mm2 = lut.adc.area_mm2;
    r.power_adc_mw = lut.adc.power_mw;
  }

  const MlpCost mc = mlp_cost(q, mask1, mask2, lut);
  r.area_classifier_mm2 = mc.area_mm2;
  r.power_classifier_mw = mc.power_mw;
  r.area_total_mm2 = r.area_analog_mm2 + r.area_adc_mm2 + r.area_classifier_mm2;
  r.power_active_mw = r.power_analog_mw + r.power_adc_mw + r.power_classifier_mw;

  r.latency_adc_ms = static_cast<double>(selection.size()) * adc_cfg.t_conv_s * 1e3;
  r.latency_mlp_ms = static_cast<double>(mc.latency_cycles) / lut.clock_hz * 1e3;
  r.latency_total_ms = r.latency_adc_ms + r.latency_mlp_ms;

  const double window_ms = window_s * 1e3;
  if (lut.power_gating) {
    r.energy_uj = r.power_analog_mw * window_ms + r.power_adc_mw * r.latency_adc_ms +
                  r.power_classifier_mw * r.latency_mlp_ms;
  } else {
    r.energy_uj = r.power_active_mw * (window_ms + r.latency_total_ms);
  }
  return r;
}

struct RealtimeCheck {
  bool ok = false;
  double margin_ms = 0.0;
};

/// Feasible iff the post-window latency beats both the response budget and
/// the window period itself.
inline RealtimeCheck realtime_check(const CostReport& r, double budget_ms = 20.0,
                                    double window_s = 1.0) {
  RealtimeCheck c;
  c.ok = r.latency_total_ms < budget_ms && r.latency_total_ms < window_s * 1e3;
  c.margin_ms = budget_ms - r.latency_total_ms;
  return c;
}

}  // namespace flexml::hwcost
