// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "flexml/errors.hpp"
#include "flexml/mlp.hpp"

namespace flexml::prune {

/// Progressive sparsity targets. When `levels` is empty, `rounds` geometric
/// steps toward `target` are generated; a zero target yields no rounds.
struct SparsitySchedule {
  double target = 0.5;
  int rounds = 3;
  std::vector<double> levels;  // explicit override, strictly increasing

  std::vector<double> per_round() const {
    if (!levels.empty()) {
      for (size_t i = 1; i < levels.size(); ++i)
        if (!(levels[i] > levels[i - 1]))
          throw ConfigError("sparsity schedule: levels must be strictly increasing");
      if (levels.back() < 0.0 || levels.back() >= 1.0)
        throw ConfigError("sparsity schedule: sparsity must be in [0,1)");
      return levels;
    }
    if (target < 0.0 || target >= 1.0)
      throw ConfigError("sparsity schedule: target must be in [0,1)");
    if (rounds < 1) throw ConfigError("sparsity schedule: rounds must be >= 1");
    if (target == 0.0) return {};
    // Keep ratio: after round t a fraction (1-target)^(t/R) of weights remains.
    std::vector<double> out;
    for (int t = 1; t <= rounds; ++t)
      out.push_back(1.0 - std::pow(1.0 - target, static_cast<double>(t) / rounds));
    out.back() = target;
    return out;
  }
};

struct MaskPair {
  Matrix m1, m2;
};

/// Global magnitude ranking over both weight matrices flattened (w1 first).
/// Exactly ceil(s * n) weights are pruned; magnitude ties break toward the
/// lower flat index. Biases are never pruned.
inline MaskPair magnitude_mask(const mlp::MlpModel& model, double sparsity) {
  if (sparsity < 0.0 || sparsity >= 1.0)
    throw UsageError("magnitude_mask: sparsity must be in [0,1)");
  const size_t n1 = model.w1.size();
  const size_t n = n1 + model.w2.size();
  const size_t n_prune = static_cast<size_t>(std::ceil(sparsity * static_cast<double>(n)));

  MaskPair mask{Matrix(model.w1.rows, model.w1.cols, 1.0),
                Matrix(model.w2.rows, model.w2.cols, 1.0)};
  if (n_prune == 0) return mask;

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  auto weight_at = [&](size_t i) {
    return i < n1 ? model.w1.data[i] : model.w2.data[i - n1];
  };
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return std::fabs(weight_at(a)) < std::fabs(weight_at(b));
  });
  for (size_t k = 0; k < n_prune; ++k) {
    const size_t i = idx[k];
    if (i < n1)
      mask.m1.data[i] = 0.0;
    else
      mask.m2.data[i - n1] = 0.0;
  }
  return mask;
}

struct RoundMetrics {
  double sparsity = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};

namespace detail {
inline double accuracy_on(const mlp::MlpModel& model, const Matrix& x,
                          const std::vector<int>& y, const std::vector<double>& gates) {
  if (x.rows == 0) return 0.0;
  int correct = 0;
  for (int r = 0; r < x.rows; ++r) {
    std::vector<double> row(static_cast<size_t>(x.cols));
    for (int c = 0; c < x.cols; ++c) row[static_cast<size_t>(c)] = x(r, c) * gates[static_cast<size_t>(c)];
    const auto p = mlp::forward_row(model, row);
    const int pred = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    correct += pred == y[static_cast<size_t>(r)] ? 1 : 0;
  }
  return static_cast<double>(correct) / x.rows;
}
}  // namespace detail

/// One pruning round: install the mask, rewind surviving weights to their
/// initialization, and retrain the sparse subnetwork for retrain_epochs with
/// the gate logits frozen.
inline mlp::TrainHistory ltp_round(mlp::MlpModel& model, mlp::GateLayer& layer,
                                   const Matrix& x_train, const std::vector<int>& y_train,
                                   const Matrix& x_val, const std::vector<int>& y_val,
                                   const MaskPair& mask, const mlp::TrainConfig& cfg,
                                   int retrain_epochs) {
  if (!layer.frozen()) throw UsageError("ltp_round: gate layer must be frozen first");
  if (model.w1_init.empty() || model.w2_init.empty())
    throw UsageError("ltp_round: missing initialization snapshot");
  if (mask.m1.rows != model.w1.rows || mask.m1.cols != model.w1.cols ||
      mask.m2.rows != model.w2.rows || mask.m2.cols != model.w2.cols)
    throw UsageError("ltp_round: mask shape mismatch");

  model.mask1 = mask.m1;
  model.mask2 = mask.m2;
  model.rewind_to_init();

  mlp::TrainConfig retrain = cfg;
  retrain.epochs = retrain_epochs;
  retrain.patience = std::min(cfg.patience, retrain_epochs);
  gating::GammaSchedule flat{1.0, 1.0, std::max(retrain_epochs, 1)};  // gates are frozen anyway
  return mlp::train(model, layer, x_train, y_train, x_val, y_val, retrain, flat);
}

/// Iterative magnitude pruning with rewind: each round re-ranks the current
/// weights at the scheduled sparsity, rewinds, and retrains. Returns
/// per-round sparsity and validation metrics.
inline std::vector<RoundMetrics> ltp_run(mlp::MlpModel& model, mlp::GateLayer& layer,
                                         const Matrix& x_train, const std::vector<int>& y_train,
                                         const Matrix& x_val, const std::vector<int>& y_val,
                                         const SparsitySchedule& schedule,
                                         const mlp::TrainConfig& cfg) {
  std::vector<RoundMetrics> metrics;
  const auto gates = gating::deterministic_gates(layer);
  for (double s : schedule.per_round()) {
    const MaskPair mask = magnitude_mask(model, s);
    const auto hist =
        ltp_round(model, layer, x_train, y_train, x_val, y_val, mask, cfg, cfg.retrain_epochs);
    RoundMetrics rm;
    rm.sparsity = model.sparsity();
    rm.val_accuracy = detail::accuracy_on(model, x_val, y_val, gates);
    rm.val_loss = hist.epochs.empty() ? 0.0 : hist.epochs.back().val_loss;
    metrics.push_back(rm);
  }
  return metrics;
}

}  // namespace flexml::prune
