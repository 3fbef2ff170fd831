// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flexml/analog.hpp"
#include "flexml/errors.hpp"

namespace flexml::adc {

struct AdcConfig {
  int n_bits = 4;
  double v_dac_lo = 0.98;
  double v_dac_hi = 1.95;
  double t_conv_s = 5e-4;

  int max_code() const { return (1 << n_bits) - 1; }

  void validate() const {
    if (n_bits < 1 || n_bits > 16) throw ConfigError("adc: n_bits must be in [1,16]");
    if (!(v_dac_lo < v_dac_hi)) throw ConfigError("adc: v_dac_lo must be < v_dac_hi");
    if (!(t_conv_s > 0.0)) throw ConfigError("adc: t_conv_s must be positive");
  }

  /// DAC range whose floor-style transfer coincides with the round-to-nearest
  /// input quantizer over a signal span: levels sit half an LSB below the
  /// evenly spaced signal points.
  static AdcConfig matched_to_signal(double v_sig_lo, double v_sig_hi, int bits = 4) {
    AdcConfig c;
    c.n_bits = bits;
    const double lsb = (v_sig_hi - v_sig_lo) / c.max_code();
    c.v_dac_lo = v_sig_lo - 0.5 * lsb;
    c.v_dac_hi = c.v_dac_lo + lsb * c.max_code();
    return c;
  }
};

/// R-2R ladder output after the gain-and-bias stage: 2^n evenly spaced
/// levels spanning [v_dac_lo, v_dac_hi] exactly.
inline double dac_level(int code, const AdcConfig& cfg) {
  if (code < 0 || code > cfg.max_code()) throw UsageError("dac_level: code out of range");
  // lerp keeps both endpoints exact.
  return std::lerp(cfg.v_dac_lo, cfg.v_dac_hi,
                   static_cast<double>(code) / static_cast<double>(cfg.max_code()));
}

struct SarTrace {
  int code = 0;
  std::vector<uint8_t> bit_kept;       // MSB first
  std::vector<double> trial_levels;    // DAC level of each trial code
  int comparisons = 0;
};

/// n-cycle successive approximation, MSB to LSB: tentatively set the bit,
/// compare the input against the DAC, keep on v_in >= level (ties keep).
inline SarTrace sar_convert_traced(double v_in, const AdcConfig& cfg) {
  SarTrace t;
  int acc = 0;
  for (int bit = cfg.n_bits - 1; bit >= 0; --bit) {
    const int trial = acc | (1 << bit);
    const double level = dac_level(trial, cfg);
    const bool keep = v_in >= level;
    if (keep) acc = trial;
    t.bit_kept.push_back(keep ? 1 : 0);
    t.trial_levels.push_back(level);
    ++t.comparisons;
  }
  t.code = acc;
  return t;
}

inline int sar_convert(double v_in, const AdcConfig& cfg) {
  return sar_convert_traced(v_in, cfg).code;
}

/// Mathematically ideal transfer of the same converter: the largest code
/// whose DAC level does not exceed the input, saturating at the rails.
/// Binary search over the level lattice rather than a bit loop.
inline int ideal_code(double v_in, const AdcConfig& cfg) {
  if (v_in < dac_level(0, cfg)) return 0;
  int lo = 0, hi = cfg.max_code();
  while (lo < hi) {
    const int mid = (lo + hi + 1) / 2;
    if (dac_level(mid, cfg) <= v_in)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

struct BankResult {
  std::vector<int> codes;
  double total_time_s = 0.0;
};

/// Multiplexes the analog feature outputs through the converter one at a
/// time, in feature order.
inline BankResult convert_bank(const analog::AnalogFeatureOut& features, const AdcConfig& cfg) {
  BankResult r;
  r.codes.reserve(features.size());
  for (const auto& f : features) r.codes.push_back(sar_convert(f.voltage, cfg));
  r.total_time_s = static_cast<double>(features.size()) * cfg.t_conv_s;
  return r;
}

/// Fixed-point value the classifier consumes for a code.
inline double code_to_input(int code, const AdcConfig& cfg) {
  if (code < 0 || code > cfg.max_code()) throw UsageError("code_to_input: code out of range");
  return static_cast<double>(code) / static_cast<double>(cfg.max_code());
}

}  // namespace flexml::adc
