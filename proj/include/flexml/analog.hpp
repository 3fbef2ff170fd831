// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "flexml/errors.hpp"
#include "flexml/signal.hpp"

namespace flexml::analog {

using signal::FeatureId;
using signal::FeatureKind;

/// Behavioral parameters of the analog feature extractors. Defaults model
/// the ideal circuits; the non-ideality knobs (diode drop, leakage droop,
/// output swing) degrade them.
struct AnalogConfig {
  double v_sig_lo = 1.0;  // volts mapped to normalized sample 0
  double v_sig_hi = 2.0;  // volts mapped to normalized sample 1
  double v_th = 0.0;      // diode-connected transistor drop, volts
  double leak_rate = 0.0; // hold-capacitor droop magnitude, volts/second
  double rc_product = 1.0;      // integrator R*C, seconds
  double gain_n = 2.0;          // sum-stage amplifier gain (1 + Rf/Ri)
  double residual_scale = 16.0; // software factor; gain_n * residual_scale = samples_per_window
  double swing_lo = 0.0;  // op-amp output limits, volts
  double swing_hi = 3.0;
  double v_l = 1.0;   // peak-detector reset level
  double v_h = 2.0;   // valley-detector reset level
  double v_ms = 1.5;  // integrator mid-scale reset level

  /// Defaults tied to a window geometry: exact-mean integrator setting and a
  /// sum residual factor that completes the sample count.
  static AnalogConfig defaults(double window_s, int samples_per_window) {
    AnalogConfig c;
    c.rc_product = window_s;
    c.residual_scale = samples_per_window / c.gain_n;
    return c;
  }

  /// Zero non-idealities and an effectively unbounded swing.
  static AnalogConfig ideal(double window_s, int samples_per_window) {
    AnalogConfig c = defaults(window_s, samples_per_window);
    c.v_th = 0.0;
    c.leak_rate = 0.0;
    c.swing_lo = -1e12;
    c.swing_hi = 1e12;
    return c;
  }

  void validate() const {
    if (!(v_sig_lo < v_sig_hi)) throw ConfigError("analog: v_sig_lo must be < v_sig_hi");
    if (!(swing_lo < swing_hi)) throw ConfigError("analog: swing_lo must be < swing_hi");
    if (v_th < 0.0) throw ConfigError("analog: v_th must be >= 0");
    if (leak_rate < 0.0) throw ConfigError("analog: leak_rate must be >= 0");
    if (!(rc_product > 0.0)) throw ConfigError("analog: rc_product must be positive");
    if (gain_n < 1.0) throw ConfigError("analog: gain_n must be >= 1");
  }

  double clip_swing(double v) const { return std::clamp(v, swing_lo, swing_hi); }
};

/// Affine map from a normalized sample in [0,1] to the signal voltage range.
inline double to_voltage(double x01, const AnalogConfig& cfg) {
  return cfg.v_sig_lo + x01 * (cfg.v_sig_hi - cfg.v_sig_lo);
}

/// Clamped inverse of to_voltage.
inline double from_voltage(double v, const AnalogConfig& cfg) {
  return std::clamp((v - cfg.v_sig_lo) / (cfg.v_sig_hi - cfg.v_sig_lo), 0.0, 1.0);
}

enum class PeakMode { max, min };

/// Diode-capacitor peak/valley detector with full-settle updates. The hold
/// node only moves when the input clears the diode drop; otherwise it droops
/// toward the reset level at leak_rate.
inline double sim_peak_detector(std::span<const double> v_in, double dt, const AnalogConfig& cfg,
                                PeakMode mode) {
  if (v_in.empty()) throw UsageError("sim_peak_detector: empty input");
  if (!(dt > 0.0)) throw UsageError("sim_peak_detector: dt must be positive");
  double v_c = mode == PeakMode::max ? cfg.v_l : cfg.v_h;
  for (double v : v_in) {
    if (mode == PeakMode::max) {
      if (v > v_c + cfg.v_th)
        v_c = v - cfg.v_th;
      else
        v_c = std::max(cfg.v_l, v_c - cfg.leak_rate * dt);
    } else {
      if (v < v_c - cfg.v_th)
        v_c = v + cfg.v_th;
      else
        v_c = std::min(cfg.v_h, v_c + cfg.leak_rate * dt);
    }
  }
  return cfg.clip_swing(v_c);
}

/// Op-amp integrator referenced to the mid-scale reset level. With
/// rc_product equal to the window duration this returns the window mean
/// exactly.
inline double sim_integrator_mean(std::span<const double> v_in, double dt,
                                  const AnalogConfig& cfg) {
  if (!(dt > 0.0)) throw UsageError("sim_integrator_mean: dt must be positive");
  double acc = 0.0;
  for (double v : v_in) acc += (v - cfg.v_ms) * dt;
  return cfg.clip_swing(cfg.v_ms + acc / cfg.rc_product);
}

struct SumOut {
  double voltage = 0.0;
  bool clipped = false;
};

/// Non-inverting amplifier on the mean output. The digital side multiplies
/// by residual_scale afterwards so that gain_n * residual_scale recovers the
/// full sample count.
inline SumOut sim_sum(double v_mean, const AnalogConfig& cfg) {
  const double raw = cfg.gain_n * v_mean;
  const double v = cfg.clip_swing(raw);
  return {v, v != raw};
}

struct AnalogFeature {
  FeatureId id;
  double voltage = 0.0;
  bool clipped = false;
};

using AnalogFeatureOut = std::vector<AnalogFeature>;

/// Runs every selected extractor on one normalized window, each from its own
/// per-window reset state. Outputs follow canonical candidate order. A Sum
/// entry taps the Mean integrator of its channel, simulating it internally
/// when Mean is not itself selected.
inline AnalogFeatureOut run_extractor_bank(const signal::Window& window,
                                           const std::vector<FeatureId>& selection,
                                           const AnalogConfig& cfg) {
  if (selection.empty()) throw ConfigError("run_extractor_bank: empty selection");
  const int channels = window.samples.rows;
  const int n = window.samples.cols;
  if (n == 0) throw UsageError("run_extractor_bank: empty window");
  for (const FeatureId& f : selection) {
    if (f.channel < 0 || f.channel >= channels)
      throw ConfigError("run_extractor_bank: selection references absent channel " +
                        std::to_string(f.channel));
  }
  const double dt = window.t_step_s;

  std::vector<double> volts(static_cast<size_t>(n));
  AnalogFeatureOut out;
  out.reserve(selection.size());
  const auto order = signal::candidate_features(channels);
  for (const FeatureId& id : order) {
    if (std::find(selection.begin(), selection.end(), id) == selection.end()) continue;
    for (int t = 0; t < n; ++t)
      volts[static_cast<size_t>(t)] = to_voltage(window.samples(id.channel, t), cfg);
    AnalogFeature f;
    f.id = id;
    switch (id.kind) {
      case FeatureKind::min:
        f.voltage = sim_peak_detector(volts, dt, cfg, PeakMode::min);
        break;
      case FeatureKind::max:
        f.voltage = sim_peak_detector(volts, dt, cfg, PeakMode::max);
        break;
      case FeatureKind::mean:
        f.voltage = sim_integrator_mean(volts, dt, cfg);
        break;
      case FeatureKind::sum: {
        const double v_mean = sim_integrator_mean(volts, dt, cfg);
        const SumOut s = sim_sum(v_mean, cfg);
        f.voltage = s.voltage;
        f.clipped = s.clipped;
        break;
      }
    }
    out.push_back(f);
  }
  return out;
}

/// Normalized mean squared error of a hardware trace against its software
/// reference, normalized by the reference energy.
inline double nmse(std::span<const double> hw, std::span<const double> sw) {
  if (hw.size() != sw.size() || hw.empty())
    throw UsageError("nmse: traces must have equal nonzero length");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < hw.size(); ++i) {
    const double d = hw[i] - sw[i];
    num += d * d;
    den += sw[i] * sw[i];
  }
  if (den <= 0.0) throw NumericError("nmse: all-zero reference trace");
  return num / den;
}

}  // namespace flexml::analog
