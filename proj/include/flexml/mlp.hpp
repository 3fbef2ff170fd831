// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "flexml/adc.hpp"
#include "flexml/analog.hpp"
#include "flexml/errors.hpp"
#include "flexml/gating.hpp"
#include "flexml/matrix.hpp"
#include "flexml/rng.hpp"
#include "flexml/signal.hpp"

namespace flexml::mlp {

using gating::GateLayer;
using gating::GateSample;
using signal::FeatureKind;

struct ModelArch {
  int d = 0;       // gated input width
  int hidden = 100;
  int classes = 2;
};

/// One-hidden-layer network with a frozen copy of its initialization (for
/// rewinding) and a binary mask over both weight matrices. Masked entries
/// stay exactly zero through every optimizer step.
struct MlpModel {
  ModelArch arch;
  Matrix w1, w2;               // d x H, H x C
  std::vector<double> b1, b2;  // H, C
  Matrix w1_init, w2_init;
  std::vector<double> b1_init, b2_init;
  Matrix mask1, mask2;  // 0/1, congruent to w1/w2

  static MlpModel init(int d, int hidden, int classes, uint64_t seed);

  int weight_count() const { return static_cast<int>(w1.size() + w2.size()); }

  int pruned_count() const {
    int n = 0;
    for (double m : mask1.data) n += m == 0.0 ? 1 : 0;
    for (double m : mask2.data) n += m == 0.0 ? 1 : 0;
    return n;
  }

  double sparsity() const {
    return weight_count() > 0 ? static_cast<double>(pruned_count()) / weight_count() : 0.0;
  }

  void apply_mask() {
    for (size_t i = 0; i < w1.size(); ++i) w1.data[i] *= mask1.data[i];
    for (size_t i = 0; i < w2.size(); ++i) w2.data[i] *= mask2.data[i];
  }

  /// Rewind unmasked parameters to their initialization; masked stay zero.
  void rewind_to_init() {
    for (size_t i = 0; i < w1.size(); ++i) w1.data[i] = w1_init.data[i] * mask1.data[i];
    for (size_t i = 0; i < w2.size(); ++i) w2.data[i] = w2_init.data[i] * mask2.data[i];
    b1 = b1_init;
    b2 = b2_init;
  }
};

inline MlpModel MlpModel::init(int d, int hidden, int classes, uint64_t seed) {
  if (d < 1 || hidden < 1 || classes < 1) throw ConfigError("mlp: arch dims must be >= 1");
  MlpModel m;
  m.arch = {d, hidden, classes};
  m.w1 = Matrix(d, hidden);
  m.w2 = Matrix(hidden, classes);
  m.b1.assign(static_cast<size_t>(hidden), 0.0);
  m.b2.assign(static_cast<size_t>(classes), 0.0);
  Rng rng(Rng::derive(seed, 0x6d6c7069ull));
  const double lim1 = std::sqrt(6.0 / d);                 // He-uniform for the ReLU layer
  const double lim2 = std::sqrt(6.0 / (hidden + classes));  // Glorot-uniform for the head
  for (auto& w : m.w1.data) w = rng.uniform(-lim1, lim1);
  for (auto& w : m.w2.data) w = rng.uniform(-lim2, lim2);
  m.w1_init = m.w1;
  m.w2_init = m.w2;
  m.b1_init = m.b1;
  m.b2_init = m.b2;
  m.mask1 = Matrix(d, hidden, 1.0);
  m.mask2 = Matrix(hidden, classes, 1.0);
  return m;
}

struct TrainConfig {
  double lr = 0.001;
  int epochs = 50;
  int retrain_epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int patience = 10;  // epochs without validation improvement; 0 disables
  int batch_size = 32;
  uint64_t seed = 1;
  double val_fraction = 0.2;  // of training subjects
  int hidden = 100;
  int input_bits = 4;
  int weight_bits = 8;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (epochs < 0 || retrain_epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (patience < 0 || patience > std::max(epochs, retrain_epochs))
      throw ConfigError("train: patience must be in [0, epochs]");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(val_fraction > 0.0) || val_fraction >= 1.0)
      throw ConfigError("train: val_fraction must be in (0,1)");
    if (hidden < 1) throw ConfigError("train: hidden must be >= 1");
    if (input_bits < 1 || input_bits > 16 || weight_bits < 2 || weight_bits > 16)
      throw ConfigError("train: bit widths out of range");
  }
};

// ---------------------------------------------------------------------------
// Forward / loss / backward
// ---------------------------------------------------------------------------

struct ForwardCache {
  Matrix x_gated;  // B x d
  Matrix pre1;     // B x H
  Matrix h;        // B x H
  Matrix probs;    // B x C
};

/// relu(x W1 + b1) W2 + b2 through a max-subtracted softmax. `x` must
/// already be gated.
inline Matrix forward(const MlpModel& m, const Matrix& x, ForwardCache* cache = nullptr) {
  if (x.cols != m.arch.d) throw UsageError("forward: input width mismatch");
  const int B = x.rows, H = m.arch.hidden, C = m.arch.classes, D = m.arch.d;
  Matrix pre1(B, H), h(B, H), logits(B, C), probs(B, C);
  for (int b = 0; b < B; ++b) {
    for (int j = 0; j < H; ++j) {
      double acc = m.b1[static_cast<size_t>(j)];
      for (int i = 0; i < D; ++i) acc += x(b, i) * m.w1(i, j);
      pre1(b, j) = acc;
      h(b, j) = acc > 0.0 ? acc : 0.0;
    }
    for (int c = 0; c < C; ++c) {
      double acc = m.b2[static_cast<size_t>(c)];
      for (int j = 0; j < H; ++j) acc += h(b, j) * m.w2(j, c);
      logits(b, c) = acc;
    }
    double mx = logits(b, 0);
    for (int c = 1; c < C; ++c) mx = std::max(mx, logits(b, c));
    double norm = 0.0;
    for (int c = 0; c < C; ++c) {
      probs(b, c) = std::exp(logits(b, c) - mx);
      norm += probs(b, c);
    }
    for (int c = 0; c < C; ++c) probs(b, c) /= norm;
  }
  if (cache != nullptr) {
    cache->x_gated = x;
    cache->pre1 = std::move(pre1);
    cache->h = std::move(h);
    cache->probs = probs;
  }
  return probs;
}

inline double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
  if (probs.rows != static_cast<int>(labels.size()))
    throw UsageError("cross_entropy: batch size mismatch");
  double acc = 0.0;
  for (int b = 0; b < probs.rows; ++b) {
    const int y = labels[static_cast<size_t>(b)];
    if (y < 0 || y >= probs.cols) throw UsageError("cross_entropy: label out of range");
    acc -= std::log(std::max(probs(b, y), 1e-300));
  }
  return acc / probs.rows;
}

/// Mean cross-entropy plus the gate layer's weighted hardware cost.
inline double total_loss(const Matrix& probs, const std::vector<int>& labels,
                         const GateLayer& layer) {
  return cross_entropy(probs, labels) + layer.lambda * gating::cost_loss(layer);
}

struct Gradients {
  Matrix w1, w2;
  std::vector<double> b1, b2;
  std::vector<double> log_alpha;
};

/// Backprop through softmax-CE, the linear layers, ReLU, and the gate
/// multiplication, then the Concrete sample. Masked weight gradients are
/// zeroed; during warm-up epochs the gate logits get exactly zero gradient.
/// `x_raw` is the ungated input batch; `sample` may be null when the layer
/// is frozen (no logit gradients).
inline Gradients backward(const MlpModel& m, const GateLayer& layer, const ForwardCache& cache,
                          const Matrix& x_raw, const GateSample* sample,
                          const std::vector<int>& labels, int epoch) {
  const int B = cache.probs.rows, H = m.arch.hidden, C = m.arch.classes, D = m.arch.d;
  if (B == 0 || cache.x_gated.rows != B) throw UsageError("backward: stale forward cache");
  if (x_raw.rows != B || x_raw.cols != D) throw UsageError("backward: input batch mismatch");

  Gradients g;
  g.w1 = Matrix(D, H);
  g.w2 = Matrix(H, C);
  g.b1.assign(static_cast<size_t>(H), 0.0);
  g.b2.assign(static_cast<size_t>(C), 0.0);
  g.log_alpha.assign(static_cast<size_t>(layer.size()), 0.0);

  Matrix dlogits(B, C);
  for (int b = 0; b < B; ++b) {
    const int y = labels[static_cast<size_t>(b)];
    for (int c = 0; c < C; ++c)
      dlogits(b, c) = (cache.probs(b, c) - (c == y ? 1.0 : 0.0)) / B;
  }
  for (int j = 0; j < H; ++j)
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b) acc += cache.h(b, j) * dlogits(b, c);
      g.w2(j, c) = acc;
    }
  for (int c = 0; c < C; ++c)
    for (int b = 0; b < B; ++b) g.b2[static_cast<size_t>(c)] += dlogits(b, c);

  Matrix dpre(B, H);
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < H; ++j) {
      double acc = 0.0;
      for (int c = 0; c < C; ++c) acc += dlogits(b, c) * m.w2(j, c);
      dpre(b, j) = cache.pre1(b, j) > 0.0 ? acc : 0.0;
    }
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < H; ++j) {
      double acc = 0.0;
      for (int b = 0; b < B; ++b) acc += cache.x_gated(b, i) * dpre(b, j);
      g.w1(i, j) = acc;
    }
  for (int j = 0; j < H; ++j)
    for (int b = 0; b < B; ++b) g.b1[static_cast<size_t>(j)] += dpre(b, j);

  if (!layer.frozen() && sample != nullptr) {
    // d(loss)/dz_i accumulates x_raw * d(loss)/dx_gated over the batch; one
    // shared gate vector per minibatch.
    std::vector<double> dz(static_cast<size_t>(D), 0.0);
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < D; ++i) {
        double acc = 0.0;
        for (int j = 0; j < H; ++j) acc += dpre(b, j) * m.w1(i, j);
        dz[static_cast<size_t>(i)] += acc * x_raw(b, i);
      }
    g.log_alpha = gating::gate_backward(dz, *sample, layer, epoch);
    if (epoch >= layer.warmup_epochs) {
      const auto cg = gating::cost_loss_grad(layer);
      for (size_t i = 0; i < g.log_alpha.size(); ++i)
        g.log_alpha[i] += layer.lambda * cg[i];
    }
  }

  for (size_t i = 0; i < g.w1.size(); ++i) g.w1.data[i] *= m.mask1.data[i];
  for (size_t i = 0; i < g.w2.size(); ++i) g.w2.data[i] *= m.mask2.data[i];
  return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  Matrix m_w1, v_w1, m_w2, v_w2;
  std::vector<double> m_b1, v_b1, m_b2, v_b2, m_la, v_la;
  int t = 0;

  static AdamState make(const MlpModel& model, const GateLayer& layer) {
    AdamState s;
    s.m_w1 = Matrix(model.w1.rows, model.w1.cols);
    s.v_w1 = s.m_w1;
    s.m_w2 = Matrix(model.w2.rows, model.w2.cols);
    s.v_w2 = s.m_w2;
    s.m_b1.assign(model.b1.size(), 0.0);
    s.v_b1 = s.m_b1;
    s.m_b2.assign(model.b2.size(), 0.0);
    s.v_b2 = s.m_b2;
    s.m_la.assign(layer.log_alpha.size(), 0.0);
    s.v_la = s.m_la;
    return s;
  }
};

namespace detail {
inline void adam_update(std::span<double> theta, std::span<const double> grad,
                        std::span<double> m, std::span<double> v, int t,
                        const TrainConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (size_t i = 0; i < theta.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}
}  // namespace detail

/// One bias-corrected Adam step over all trainable tensors. Masked weights
/// are re-zeroed afterwards; frozen layers keep their logits untouched.
inline void adam_step(MlpModel& model, GateLayer& layer, const Gradients& g, AdamState& s,
                      const TrainConfig& cfg) {
  ++s.t;
  detail::adam_update(model.w1.data, g.w1.data, s.m_w1.data, s.v_w1.data, s.t, cfg);
  detail::adam_update(model.w2.data, g.w2.data, s.m_w2.data, s.v_w2.data, s.t, cfg);
  detail::adam_update(model.b1, g.b1, s.m_b1, s.v_b1, s.t, cfg);
  detail::adam_update(model.b2, g.b2, s.m_b2, s.v_b2, s.t, cfg);
  if (!layer.frozen())
    detail::adam_update(layer.log_alpha, g.log_alpha, s.m_la, s.v_la, s.t, cfg);
  model.apply_mask();
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double gamma = 0.0;
  double expected_cost = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
};

/// Minibatch training with per-batch stochastic gates, per-epoch temperature
/// annealing, and early stopping on validation loss with best-parameter
/// restore. With patience 0 early stopping is disabled and the final
/// parameters are kept.
inline TrainHistory train(MlpModel& model, GateLayer& layer, const Matrix& x_train,
                          const std::vector<int>& y_train, const Matrix& x_val,
                          const std::vector<int>& y_val, const TrainConfig& cfg,
                          const gating::GammaSchedule& schedule) {
  cfg.validate();
  if (x_train.rows == 0) throw UsageError("train: empty training set");
  if (x_train.rows != static_cast<int>(y_train.size()))
    throw UsageError("train: feature/label count mismatch");

  Rng rng(Rng::derive(cfg.seed, 0x747261696eull));
  AdamState adam = AdamState::make(model, layer);
  TrainHistory hist;

  struct Snapshot {
    Matrix w1, w2;
    std::vector<double> b1, b2, log_alpha;
  };
  Snapshot best;
  double best_val = std::numeric_limits<double>::infinity();
  int stall = 0;

  std::vector<int> order(static_cast<size_t>(x_train.rows));
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  const bool track_best = cfg.patience > 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (!layer.frozen() && schedule.total_epochs >= 1) {
      layer.gamma = gating::anneal_gamma(schedule, std::clamp(epoch, 0, schedule.total_epochs - 1));
    }
    rng.shuffle(order);

    double loss_sum = 0.0;
    int seen = 0;
    for (int start = 0; start < x_train.rows; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, x_train.rows - start);
      Matrix xb(bsz, x_train.cols);
      std::vector<int> yb(static_cast<size_t>(bsz));
      for (int r = 0; r < bsz; ++r) {
        const int src = order[static_cast<size_t>(start + r)];
        for (int c = 0; c < x_train.cols; ++c) xb(r, c) = x_train(src, c);
        yb[static_cast<size_t>(r)] = y_train[static_cast<size_t>(src)];
      }

      GateSample sample;
      std::vector<double> z;
      if (layer.frozen()) {
        z = gating::deterministic_gates(layer);
      } else {
        sample = gating::sample_gates(layer, rng);
        z = sample.z;
      }
      Matrix xg = xb;
      for (int r = 0; r < bsz; ++r)
        for (int c = 0; c < xb.cols; ++c) xg(r, c) *= z[static_cast<size_t>(c)];

      ForwardCache cache;
      const Matrix probs = forward(model, xg, &cache);
      loss_sum += total_loss(probs, yb, layer) * bsz;
      seen += bsz;
      const Gradients g = backward(model, layer, cache, xb,
                                   layer.frozen() ? nullptr : &sample, yb, epoch);
      adam_step(model, layer, g, adam, cfg);
    }

    EpochStats stats;
    stats.train_loss = loss_sum / seen;
    stats.gamma = layer.gamma;
    stats.expected_cost = gating::cost_loss(layer);

    if (x_val.rows > 0) {
      const auto zv = gating::deterministic_gates(layer);
      Matrix xvg = x_val;
      for (int r = 0; r < x_val.rows; ++r)
        for (int c = 0; c < x_val.cols; ++c) xvg(r, c) *= zv[static_cast<size_t>(c)];
      stats.val_loss = total_loss(forward(model, xvg), y_val, layer);
    } else {
      stats.val_loss = stats.train_loss;
    }
    hist.epochs.push_back(stats);

    if (track_best) {
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        best = {model.w1, model.w2, model.b1, model.b2, layer.log_alpha};
        hist.best_epoch = epoch;
        stall = 0;
      } else {
        ++stall;
        if (stall >= cfg.patience) break;
      }
    }
  }

  if (track_best && hist.best_epoch >= 0) {
    model.w1 = best.w1;
    model.w2 = best.w2;
    model.b1 = best.b1;
    model.b2 = best.b2;
    if (!layer.frozen()) layer.log_alpha = best.log_alpha;
  }
  return hist;
}

// ---------------------------------------------------------------------------
// Post-training quantization
// ---------------------------------------------------------------------------

/// Per-tensor symmetric weight quantization plus the input bit width the
/// classifier was trained for.
struct QuantizedModel {
  ModelArch arch;
  std::vector<int> q1, q2;  // row-major codes, |q| <= 2^(bits-1)-1
  double scale1 = 1.0, scale2 = 1.0;
  std::vector<double> b1, b2;
  int weight_bits = 8;
  int input_bits = 4;

  double w1(int i, int j) const {
    return q1[static_cast<size_t>(i) * static_cast<size_t>(arch.hidden) +
              static_cast<size_t>(j)] * scale1;
  }
  double w2(int j, int c) const {
    return q2[static_cast<size_t>(j) * static_cast<size_t>(arch.classes) +
              static_cast<size_t>(c)] * scale2;
  }
};

namespace detail {
inline double symmetric_scale(const Matrix& w, int bits) {
  double mx = 0.0;
  for (double x : w.data) mx = std::max(mx, std::fabs(x));
  const double levels = (1 << (bits - 1)) - 1;
  return mx > 0.0 ? mx / levels : 1.0;  // all-zero tensor keeps scale 1
}
}  // namespace detail

inline QuantizedModel quantize_weights(const MlpModel& m, int bits = 8, int input_bits = 4) {
  QuantizedModel q;
  q.arch = m.arch;
  q.weight_bits = bits;
  q.input_bits = input_bits;
  q.scale1 = detail::symmetric_scale(m.w1, bits);
  q.scale2 = detail::symmetric_scale(m.w2, bits);
  q.q1.reserve(m.w1.size());
  q.q2.reserve(m.w2.size());
  for (double w : m.w1.data) q.q1.push_back(static_cast<int>(std::llround(w / q.scale1)));
  for (double w : m.w2.data) q.q2.push_back(static_cast<int>(std::llround(w / q.scale2)));
  q.b1 = m.b1;
  q.b2 = m.b2;
  return q;
}

/// Round-to-nearest quantization of a unit-interval value onto the 2^bits-1
/// step grid the digital input registers hold.
inline double quantize_input(double x01, int bits = 4) {
  const double levels = (1 << bits) - 1;
  return std::round(x01 * levels) / levels;
}

inline std::vector<double> forward_row(const MlpModel& m, std::span<const double> x) {
  Matrix xb(1, m.arch.d);
  for (int i = 0; i < m.arch.d; ++i) xb(0, i) = x[static_cast<size_t>(i)];
  const Matrix p = forward(m, xb);
  return {p.data.begin(), p.data.end()};
}

inline std::vector<double> forward_row(const QuantizedModel& m, std::span<const double> x) {
  const int D = m.arch.d, H = m.arch.hidden, C = m.arch.classes;
  if (static_cast<int>(x.size()) != D) throw UsageError("forward_row: input width mismatch");
  std::vector<double> h(static_cast<size_t>(H));
  for (int j = 0; j < H; ++j) {
    double acc = m.b1[static_cast<size_t>(j)];
    for (int i = 0; i < D; ++i) acc += x[static_cast<size_t>(i)] * m.w1(i, j);
    h[static_cast<size_t>(j)] = acc > 0.0 ? acc : 0.0;
  }
  std::vector<double> logits(static_cast<size_t>(C));
  for (int c = 0; c < C; ++c) {
    double acc = m.b2[static_cast<size_t>(c)];
    for (int j = 0; j < H; ++j) acc += h[static_cast<size_t>(j)] * m.w2(j, c);
    logits[static_cast<size_t>(c)] = acc;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double norm = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    norm += v;
  }
  for (auto& v : logits) v /= norm;
  return logits;
}

// ---------------------------------------------------------------------------
// Feature inputs and evaluation paths
// ---------------------------------------------------------------------------

/// Unit-interval value a candidate entry feeds the classifier with. Sum is
/// scaled back by the sample count so every input shares the [0,1] domain.
inline double unit_feature_value(const signal::FeatureEntry& e, int samples_per_window) {
  return e.id.kind == FeatureKind::sum ? e.value / samples_per_window : e.value;
}

/// Output voltage of the corresponding extractor with all non-idealities off.
inline double ideal_feature_voltage(const signal::FeatureEntry& e, int samples_per_window,
                                    const analog::AnalogConfig& cfg) {
  const double v = analog::to_voltage(unit_feature_value(e, samples_per_window), cfg);
  return e.id.kind == FeatureKind::sum ? cfg.gain_n * v : v;
}

struct LabeledFeatures {
  Matrix x;
  std::vector<int> y;
};

/// Training-time inputs: ideal software statistics quantized to the input
/// bit width.
inline LabeledFeatures training_features(const signal::WindowSet& normalized, int input_bits) {
  const int d = normalized.num_channels * 4;
  LabeledFeatures out;
  out.x = Matrix(static_cast<int>(normalized.windows.size()), d);
  out.y.reserve(normalized.windows.size());
  for (size_t r = 0; r < normalized.windows.size(); ++r) {
    const auto fv = signal::reference_features(normalized.windows[r]);
    for (size_t i = 0; i < fv.size(); ++i)
      out.x(static_cast<int>(r), static_cast<int>(i)) = quantize_input(
          unit_feature_value(fv[i], normalized.samples_per_window), input_bits);
    out.y.push_back(normalized.windows[r].label);
  }
  return out;
}

enum class FeaturePath { ideal, analog_adc };

/// Deployed input vector for one normalized window.
///  - ideal: software statistics mapped to their ideal extractor voltages and
///    quantized through the converter's exact transfer.
///  - analog_adc: behavioral extractor simulation followed by the bit-level
///    successive-approximation loop.
/// Unselected entries are zero either way (their gates annihilate them).
inline std::vector<double> deployed_inputs(const signal::Window& window, int samples_per_window,
                                           const std::vector<signal::FeatureId>& selection,
                                           const analog::AnalogConfig& acfg,
                                           const adc::AdcConfig& dcfg, FeaturePath path) {
  const int d = window.samples.rows * 4;
  std::vector<double> x(static_cast<size_t>(d), 0.0);
  if (selection.empty()) return x;
  const auto order = signal::candidate_features(window.samples.rows);

  if (path == FeaturePath::ideal) {
    const auto fv = signal::reference_features(window);
    for (size_t i = 0; i < fv.size(); ++i) {
      if (std::find(selection.begin(), selection.end(), fv[i].id) == selection.end()) continue;
      const double v = ideal_feature_voltage(fv[i], samples_per_window, acfg);
      x[i] = adc::code_to_input(adc::ideal_code(v, dcfg), dcfg);
    }
    return x;
  }

  const auto bank = analog::run_extractor_bank(window, selection, acfg);
  const auto conv = adc::convert_bank(bank, dcfg);
  for (size_t k = 0; k < bank.size(); ++k) {
    const auto it = std::find(order.begin(), order.end(), bank[k].id);
    x[static_cast<size_t>(it - order.begin())] = adc::code_to_input(conv.codes[k], dcfg);
  }
  return x;
}

struct EvalResult {
  double accuracy = 0.0;
  std::vector<int> predictions;
};

/// Test-set accuracy through either feature path. The gate layer must be
/// frozen; its hard mask defines the selected extractors.
template <typename Model>
EvalResult evaluate(const Model& model, const GateLayer& layer,
                    const signal::WindowSet& normalized, const analog::AnalogConfig& acfg,
                    const adc::AdcConfig& dcfg, FeaturePath path) {
  if (!layer.frozen()) throw UsageError("evaluate: gate layer must be frozen");
  const auto z = gating::deterministic_gates(layer);
  const auto order = signal::candidate_features(normalized.num_channels);
  std::vector<signal::FeatureId> selection;
  for (size_t i = 0; i < z.size(); ++i)
    if (z[i] > 0.0) selection.push_back(order[i]);

  EvalResult res;
  res.predictions.reserve(normalized.windows.size());
  int correct = 0;
  for (const auto& w : normalized.windows) {
    auto x = deployed_inputs(w, normalized.samples_per_window, selection, acfg, dcfg, path);
    for (size_t i = 0; i < x.size(); ++i) x[i] *= z[i];
    const auto probs = forward_row(model, x);
    const int pred = static_cast<int>(std::max_element(probs.begin(), probs.end()) -
                                      probs.begin());
    res.predictions.push_back(pred);
    correct += pred == w.label ? 1 : 0;
  }
  res.accuracy =
      normalized.windows.empty() ? 0.0 : static_cast<double>(correct) / normalized.windows.size();
  return res;
}

}  // namespace flexml::mlp
