// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "flexml/adc.hpp"
#include "flexml/mlp.hpp"
#include "flexml/rng.hpp"

using namespace flexml;
using namespace flexml::adc;

namespace {

// Reference transfer written the slow way: scan every code from the top.
int brute_force_code(double v_in, const AdcConfig& cfg) {
  for (int code = cfg.max_code(); code > 0; --code)
    if (dac_level(code, cfg) <= v_in) return code;
  return 0;
}

}  // namespace

TEST_CASE("dac levels are affine, increasing, endpoint-exact", "[adc]") {
  AdcConfig cfg;
  REQUIRE(dac_level(0, cfg) == 0.98);
  REQUIRE(dac_level(15, cfg) == 1.95);
  REQUIRE(dac_level(8, cfg) == Catch::Approx(0.98 + 8.0 * 0.97 / 15.0));
  for (int c = 1; c <= 15; ++c) REQUIRE(dac_level(c, cfg) > dac_level(c - 1, cfg));

  AdcConfig one;
  one.n_bits = 1;
  REQUIRE(dac_level(1, one) == one.v_dac_hi);
  REQUIRE_THROWS_AS(dac_level(16, cfg), UsageError);
}

TEST_CASE("sar conversion matches the brute-force oracle", "[adc]") {
  AdcConfig cfg;
  Rng rng(1234);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(cfg.v_dac_lo - 0.1, cfg.v_dac_hi + 0.1);
    REQUIRE(sar_convert(v, cfg) == brute_force_code(v, cfg));
  }
  REQUIRE(sar_convert(0.98, cfg) == 0);
  REQUIRE(sar_convert(1.95, cfg) == 15);
  REQUIRE(sar_convert(2.4, cfg) == 15);
  REQUIRE(sar_convert(1.465, cfg) == 7);
  REQUIRE(sar_convert(0.5, cfg) == 0);
}

TEST_CASE("sar conversion is monotone in the input", "[adc]") {
  AdcConfig cfg;
  Rng rng(55);
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform(0.8, 2.1);
    const double b = rng.uniform(0.8, 2.1);
    const double lo = std::min(a, b), hi = std::max(a, b);
    REQUIRE(sar_convert(lo, cfg) <= sar_convert(hi, cfg));
  }
}

TEST_CASE("exactly n comparator decisions per conversion", "[adc]") {
  for (int bits : {1, 4, 8}) {
    AdcConfig cfg;
    cfg.n_bits = bits;
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
      const auto trace = sar_convert_traced(rng.uniform(0.9, 2.0), cfg);
      REQUIRE(trace.comparisons == bits);
      REQUIRE(trace.bit_kept.size() == static_cast<size_t>(bits));
    }
  }
}

TEST_CASE("ideal transfer equals the bit loop everywhere", "[adc]") {
  AdcConfig cfg;
  Rng rng(91);
  for (int i = 0; i < 5000; ++i) {
    const double v = rng.uniform(0.5, 2.5);
    REQUIRE(ideal_code(v, cfg) == sar_convert(v, cfg));
  }
}

TEST_CASE("conversion bank timing", "[adc]") {
  AdcConfig cfg;
  analog::AnalogFeatureOut feats(4);
  for (auto& f : feats) f.voltage = 1.5;
  auto r = convert_bank(feats, cfg);
  REQUIRE(r.codes.size() == 4);
  REQUIRE(r.total_time_s == Catch::Approx(2.0e-3));

  REQUIRE(convert_bank({}, cfg).codes.empty());
  REQUIRE(convert_bank({}, cfg).total_time_s == 0.0);

  analog::AnalogFeatureOut many(21);
  for (auto& f : many) f.voltage = 1.2;
  REQUIRE(convert_bank(many, cfg).total_time_s == Catch::Approx(10.5e-3));
}

TEST_CASE("code_to_input endpoints and spacing", "[adc]") {
  AdcConfig cfg;
  REQUIRE(code_to_input(0, cfg) == 0.0);
  REQUIRE(code_to_input(15, cfg) == 1.0);
  REQUIRE(code_to_input(5, cfg) == Catch::Approx(1.0 / 3.0));
  REQUIRE_THROWS_AS(code_to_input(16, cfg), UsageError);
}

TEST_CASE("round trip through signal voltage stays within one step", "[adc]") {
  AdcConfig cfg;
  analog::AnalogConfig acfg;  // signal 1..2 V
  const double lsb_equiv = 1.0 / cfg.max_code();
  for (int i = 0; i <= 4096; ++i) {
    const double x = static_cast<double>(i) / 4096.0;
    const double v = analog::to_voltage(x, acfg);
    const double back = code_to_input(sar_convert(v, cfg), cfg);
    REQUIRE(std::fabs(back - x) <= lsb_equiv + 1e-12);
  }
}

TEST_CASE("matched range reproduces the round-to-nearest quantizer", "[adc]") {
  analog::AnalogConfig acfg;
  const auto cfg = AdcConfig::matched_to_signal(acfg.v_sig_lo, acfg.v_sig_hi, 4);
  for (int i = 0; i <= 4096; ++i) {
    const double x = static_cast<double>(i) / 4096.0;
    const double via_adc = code_to_input(sar_convert(analog::to_voltage(x, acfg), cfg), cfg);
    REQUIRE(via_adc == mlp::quantize_input(x, 4));
  }
}
