// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flexml/gating.hpp"

using namespace flexml;
using namespace flexml::gating;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

GateLayer layer_with(std::vector<double> log_alpha, double gamma = 1.0, double lambda = 0.0,
                     int warmup = 0, std::vector<double> costs = {}) {
  if (costs.empty()) costs.assign(log_alpha.size(), 1.0);
  GateLayer g = GateLayer::make(costs, gamma, lambda, warmup);
  g.log_alpha = std::move(log_alpha);
  return g;
}

}  // namespace

TEST_CASE("concrete sample closed forms", "[gating]") {
  for (double gamma : {2.0, 1.0, 0.1}) {
    auto layer = layer_with({0.0}, gamma);
    REQUIRE(gates_from_uniforms(layer, std::vector<double>{0.5})[0] == Catch::Approx(0.5));
  }
  auto layer = layer_with({0.0}, 1.0);
  REQUIRE(gates_from_uniforms(layer, std::vector<double>{0.9})[0] == Catch::Approx(0.9));
  auto sharp = layer_with({0.0}, 0.1);
  REQUIRE(gates_from_uniforms(sharp, std::vector<double>{0.9})[0] ==
          Catch::Approx(1.0 - 2.87e-10).margin(1e-10));
}

TEST_CASE("deterministic gates and freeze semantics", "[gating]") {
  auto layer = layer_with({0.0, 50.0, -50.0});
  auto z = deterministic_gates(layer);
  REQUIRE(z[0] == Catch::Approx(0.5));
  REQUIRE(z[1] == Catch::Approx(1.0));
  REQUIRE(z[2] == Catch::Approx(0.0).margin(1e-20));

  layer.frozen_mask = std::vector<uint8_t>{1, 0, 1};
  auto hard = deterministic_gates(layer);
  REQUIRE(hard == std::vector<double>{1.0, 0.0, 1.0});
}

TEST_CASE("gates multiply the input elementwise", "[gating]") {
  const std::vector<double> x{2.0, 3.0};
  REQUIRE(apply_gates(x, std::vector<double>{1.0, 1.0}) == x);
  REQUIRE(apply_gates(x, std::vector<double>{0.0, 0.0}) == std::vector<double>{0.0, 0.0});
  REQUIRE(apply_gates(x, std::vector<double>{0.5, 1.0}) == std::vector<double>{1.0, 3.0});
  REQUIRE_THROWS_AS(apply_gates(x, std::vector<double>{1.0}), UsageError);
}

TEST_CASE("cost loss closed form and monotonicity", "[gating]") {
  auto zero = layer_with({1.0, -2.0}, 1.0, 0.0, 0, {0.0, 0.0});
  REQUIRE(cost_loss(zero) == 0.0);

  auto layer = layer_with({0.0, 4.6}, 1.0, 0.0, 0, {2.0, 3.0});
  const double expected = 0.5 * 2.0 + 1.0 / (1.0 + std::exp(-4.6)) * 3.0;
  REQUIRE(cost_loss(layer) == Catch::Approx(expected));
  REQUIRE(cost_loss(layer) == Catch::Approx(3.970).margin(5e-3));

  auto bumped = layer;
  bumped.log_alpha[0] += 0.3;
  REQUIRE(cost_loss(bumped) > cost_loss(layer));
}

TEST_CASE("cost loss is invariant under joint permutation", "[gating]") {
  auto a = layer_with({0.3, -1.2, 2.0}, 1.0, 0.0, 0, {1.0, 2.0, 3.0});
  auto b = layer_with({2.0, 0.3, -1.2}, 1.0, 0.0, 0, {3.0, 1.0, 2.0});
  REQUIRE(cost_loss(a) == Catch::Approx(cost_loss(b)).epsilon(1e-15));
}

TEST_CASE("gate gradient: warm-up detach and closed form", "[gating]") {
  auto layer = layer_with({0.0}, 1.0, 0.0, 3);
  GateSample s;
  s.u = {0.5};
  s.z = gates_from_uniforms(layer, s.u);
  const std::vector<double> upstream{1.0};

  auto g0 = gate_backward(upstream, s, layer, 0);
  REQUIRE(g0[0] == 0.0);
  auto g3 = gate_backward(upstream, s, layer, 3);
  REQUIRE(g3[0] == Catch::Approx(0.25));

  GateSample stale;
  REQUIRE_THROWS_AS(gate_backward(upstream, stale, layer, 3), UsageError);
}

TEST_CASE("gate gradient matches finite differences", "[gating]") {
  // Drawn from the region where a central difference of a magnitude-one
  // function can resolve the derivative to 1e-6; deep saturation puts the
  // true gradient below double-precision FD noise.
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const double gamma = rng.uniform(0.5, 2.0);
    const double la = rng.uniform(-2.0, 2.0);
    const double u = rng.uniform(0.2, 0.8);
    auto layer = layer_with({la}, gamma);
    GateSample s;
    s.u = {u};
    s.z = gates_from_uniforms(layer, s.u);
    const auto grad = gate_backward(std::vector<double>{1.0}, s, layer, 0);

    const double h = 1e-6;
    auto layer_p = layer_with({la + h}, gamma);
    auto layer_m = layer_with({la - h}, gamma);
    const double fd = (gates_from_uniforms(layer_p, s.u)[0] -
                       gates_from_uniforms(layer_m, s.u)[0]) /
                      (2.0 * h);
    const double denom = std::max(std::fabs(grad[0]) + std::fabs(fd), 1e-8);
    REQUIRE(std::fabs(grad[0] - fd) / denom <= 1e-6);
  }
}

TEST_CASE("temperature annealing endpoints and interior point", "[gating]") {
  GammaSchedule sched{2.0, 0.5, 50};
  REQUIRE(anneal_gamma(sched, 0) == Catch::Approx(2.0));
  REQUIRE(anneal_gamma(sched, 49) == Catch::Approx(0.5));
  REQUIRE(anneal_gamma(sched, 25) == Catch::Approx(2.0 * std::pow(0.25, 25.0 / 49.0)));

  GammaSchedule flat{0.5, 0.5, 50};
  for (int e : {0, 10, 49}) REQUIRE(anneal_gamma(flat, e) == 0.5);
  REQUIRE_THROWS_AS(anneal_gamma(sched, 50), UsageError);
}

TEST_CASE("gate pruning thresholds and boundaries", "[gating]") {
  auto layer = layer_with({logit(0.04), logit(0.2), logit(0.7)});
  auto copy = layer;
  auto mask = prune_gates(copy, 0.05);
  REQUIRE(mask == std::vector<uint8_t>{0, 1, 1});
  REQUIRE(copy.frozen());
  REQUIRE_THROWS_AS(prune_gates(copy, 0.05), UsageError);

  auto all = layer;
  REQUIRE(prune_gates(all, 0.0) == std::vector<uint8_t>{1, 1, 1});
  auto none = layer;
  REQUIRE(prune_gates(none, 1.0) == std::vector<uint8_t>{0, 0, 0});
}

TEST_CASE("selected sets shrink as tau grows", "[gating]") {
  Rng rng(77);
  std::vector<double> la(24);
  for (auto& v : la) v = rng.uniform(-4.0, 4.0);
  std::vector<uint8_t> prev;
  for (double tau : {0.01, 0.05, 0.1, 0.2, 0.5, 0.9}) {
    auto layer = layer_with(la);
    const auto mask = prune_gates(layer, tau);
    if (!prev.empty()) {
      for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) REQUIRE(prev[i] == 1);  // subset of the looser threshold
    }
    prev = mask;
  }
}

TEST_CASE("sample median matches the gate probability", "[gating]") {
  const int n = 100000;
  for (double la : {-2.0, 0.0, 2.0}) {
    for (double gamma : {2.0, 0.5, 0.1}) {
      auto layer = layer_with({la}, gamma);
      Rng rng(Rng::derive(42, static_cast<uint64_t>(la * 10 + gamma * 100)));
      int above = 0;
      for (int i = 0; i < n; ++i) {
        const auto s = sample_gates(layer, rng);
        above += s.z[0] > 0.5 ? 1 : 0;
      }
      const double p = sigmoid(la);
      const double sd = std::sqrt(p * (1.0 - p) / n);
      REQUIRE(std::fabs(static_cast<double>(above) / n - p) <= 3.0 * sd);
    }
  }
}

TEST_CASE("lower temperatures sharpen the samples", "[gating]") {
  const int n = 100000;
  // Common uniforms across temperatures couple the comparison sample-by-sample.
  std::vector<double> u(n);
  Rng rng(4242);
  for (auto& v : u) v = 1e-7 + rng.uniform() * (1.0 - 2e-7);

  double prev_frac = 1.1;
  for (double gamma : {2.0, 1.0, 0.5, 0.1}) {
    auto layer = layer_with({0.7}, gamma);
    int mid = 0;
    for (int i = 0; i < n; ++i) {
      const double z = gates_from_uniforms(layer, std::span<const double>(&u[i], 1))[0];
      mid += z > 0.05 && z < 0.95 ? 1 : 0;
    }
    const double frac = static_cast<double>(mid) / n;
    REQUIRE(frac <= prev_frac);
    prev_frac = frac;
  }
}
