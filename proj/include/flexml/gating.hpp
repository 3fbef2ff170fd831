// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "flexml/errors.hpp"
#include "flexml/rng.hpp"

namespace flexml::gating {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Trainable stochastic input gates. Each feature i carries a logit
/// log_alpha[i] whose sigmoid is the gate's inclusion probability, a shared
/// relaxation temperature gamma, and a per-feature hardware cost used by the
/// regularizer. After pruning the layer freezes to a hard 0/1 mask.
struct GateLayer {
  std::vector<double> log_alpha;
  double gamma = 1.0;
  double lambda = 0.0;
  int warmup_epochs = 0;
  std::vector<double> costs;
  std::optional<std::vector<uint8_t>> frozen_mask;

  static GateLayer make(std::vector<double> costs, double gamma, double lambda,
                        int warmup_epochs, double init_log_alpha = 2.2) {
    GateLayer g;
    g.log_alpha.assign(costs.size(), init_log_alpha);
    g.costs = std::move(costs);
    g.gamma = gamma;
    g.lambda = lambda;
    g.warmup_epochs = warmup_epochs;
    g.validate();
    return g;
  }

  int size() const { return static_cast<int>(log_alpha.size()); }
  bool frozen() const { return frozen_mask.has_value(); }

  void validate() const {
    if (log_alpha.size() != costs.size())
      throw ConfigError("gate layer: log_alpha and costs must have equal length");
    if (!(gamma > 0.0)) throw ConfigError("gate layer: gamma must be positive");
    if (lambda < 0.0) throw ConfigError("gate layer: lambda must be >= 0");
    if (warmup_epochs < 0) throw ConfigError("gate layer: warmup_epochs must be >= 0");
    for (double c : costs)
      if (c < 0.0) throw ConfigError("gate layer: costs must be non-negative");
  }
};

struct GammaSchedule {
  double start = 2.0;
  double end = 0.1;
  int total_epochs = 50;  // geometric interpolation across this span
};

struct GateSample {
  std::vector<double> z;
  std::vector<double> u;  // cached uniforms for the backward pass
};

/// Gate values implied by a fixed uniform draw:
///   s_i = sigmoid((logit(u_i) + log_alpha_i) / gamma), z_i = clip(s_i, 0, 1).
inline std::vector<double> gates_from_uniforms(const GateLayer& layer,
                                               std::span<const double> u) {
  if (u.size() != layer.log_alpha.size())
    throw UsageError("gates_from_uniforms: uniform vector length mismatch");
  std::vector<double> z(u.size());
  for (size_t i = 0; i < u.size(); ++i) {
    const double raw =
        sigmoid((std::log(u[i]) - std::log1p(-u[i]) + layer.log_alpha[i]) / layer.gamma);
    z[i] = std::clamp(raw, 0.0, 1.0);
  }
  return z;
}

/// Concrete (Gumbel-Sigmoid) relaxation of Bernoulli gates. u is drawn on
/// the open interval for numerical safety and cached for the backward pass.
inline GateSample sample_gates(const GateLayer& layer, Rng& rng) {
  if (layer.frozen()) throw UsageError("sample_gates: layer is frozen");
  constexpr double kEps = 1e-7;
  GateSample s;
  const size_t d = layer.log_alpha.size();
  s.u.resize(d);
  for (size_t i = 0; i < d; ++i) s.u[i] = kEps + rng.uniform() * (1.0 - 2.0 * kEps);
  s.z = gates_from_uniforms(layer, s.u);
  return s;
}

/// Inference-time gates: sigmoid(log_alpha), or the hard mask once frozen.
inline std::vector<double> deterministic_gates(const GateLayer& layer) {
  std::vector<double> z(layer.log_alpha.size());
  if (layer.frozen()) {
    const auto& m = *layer.frozen_mask;
    for (size_t i = 0; i < z.size(); ++i) z[i] = m[i] ? 1.0 : 0.0;
    return z;
  }
  for (size_t i = 0; i < z.size(); ++i) z[i] = sigmoid(layer.log_alpha[i]);
  return z;
}

inline std::vector<double> apply_gates(std::span<const double> x, std::span<const double> z) {
  if (x.size() != z.size()) throw UsageError("apply_gates: length mismatch");
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = z[i] * x[i];
  return out;
}

/// Differentiable expected hardware cost: sum_i sigmoid(log_alpha_i) * c_i.
inline double cost_loss(const GateLayer& layer) {
  double acc = 0.0;
  for (size_t i = 0; i < layer.log_alpha.size(); ++i)
    acc += sigmoid(layer.log_alpha[i]) * layer.costs[i];
  return acc;
}

/// d(cost_loss)/d(log_alpha), elementwise sigmoid'(log_alpha_i) * c_i.
inline std::vector<double> cost_loss_grad(const GateLayer& layer) {
  std::vector<double> g(layer.log_alpha.size());
  for (size_t i = 0; i < g.size(); ++i) {
    const double sg = sigmoid(layer.log_alpha[i]);
    g[i] = sg * (1.0 - sg) * layer.costs[i];
  }
  return g;
}

/// Chain rule through the Concrete sample, ds/dlog_alpha = s(1-s)/gamma.
/// During the warm-up phase the whole gate layer is detached and the
/// gradient is exactly zero. The cost-term gradient is the trainer's job.
inline std::vector<double> gate_backward(std::span<const double> upstream_grad_on_z,
                                         const GateSample& sample, const GateLayer& layer,
                                         int epoch) {
  if (sample.u.size() != layer.log_alpha.size() ||
      upstream_grad_on_z.size() != layer.log_alpha.size())
    throw UsageError("gate_backward: missing or mismatched forward cache");
  std::vector<double> g(layer.log_alpha.size(), 0.0);
  if (epoch < layer.warmup_epochs) return g;
  for (size_t i = 0; i < g.size(); ++i) {
    const double s = sample.z[i];  // clip is the identity on (0,1)
    g[i] = upstream_grad_on_z[i] * s * (1.0 - s) / layer.gamma;
  }
  return g;
}

/// Geometric interpolation from start to end across the schedule.
inline double anneal_gamma(const GammaSchedule& sched, int epoch) {
  if (epoch < 0 || epoch >= sched.total_epochs) throw UsageError("anneal_gamma: epoch out of range");
  if (sched.total_epochs <= 1 || sched.start == sched.end) return sched.start;
  const double t = static_cast<double>(epoch) / static_cast<double>(sched.total_epochs - 1);
  return sched.start * std::pow(sched.end / sched.start, t);
}

/// Hard feature selection: keep gate i iff its deterministic value exceeds
/// tau. Freezes the layer and returns the mask.
inline std::vector<uint8_t> prune_gates(GateLayer& layer, double tau) {
  if (layer.frozen()) throw UsageError("prune_gates: layer already frozen");
  std::vector<uint8_t> mask(layer.log_alpha.size(), 0);
  for (size_t i = 0; i < mask.size(); ++i)
    mask[i] = sigmoid(layer.log_alpha[i]) > tau ? 1 : 0;
  layer.frozen_mask = mask;
  return mask;
}

}  // namespace flexml::gating
