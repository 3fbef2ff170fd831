// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "flexml/mlp.hpp"
#include "flexml/synthetic.hpp"

using namespace flexml;
using namespace flexml::mlp;
using gating::GateLayer;
using gating::GateSample;

namespace {

// Loss as a pure function of (parameters, logits) with the uniform draw held
// fixed; the finite-difference oracle perturbs through this.
double full_loss(const MlpModel& m, const GateLayer& layer, const std::vector<double>& u,
                 const Matrix& x, const std::vector<int>& y) {
  const auto z = gating::gates_from_uniforms(layer, u);
  Matrix xg = x;
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) xg(r, c) *= z[static_cast<size_t>(c)];
  return total_loss(forward(m, xg), y, layer);
}

struct GradCheckSetup {
  MlpModel model;
  GateLayer layer;
  GateSample sample;
  Matrix x;
  std::vector<int> y;
  Gradients analytic;
};

GradCheckSetup make_gradcheck(int d, int hidden, int classes, int batch, double lambda,
                              double gamma, int epoch, int warmup, uint64_t seed) {
  GradCheckSetup s{.model = MlpModel::init(d, hidden, classes, seed),
                   .layer = {},
                   .sample = {},
                   .x = Matrix(batch, d),
                   .y = {},
                   .analytic = {}};
  Rng rng(seed + 1);
  std::vector<double> costs(static_cast<size_t>(d));
  for (auto& c : costs) c = rng.uniform(0.1, 1.0);
  s.layer = GateLayer::make(costs, gamma, lambda, warmup);
  for (auto& la : s.layer.log_alpha) la = rng.uniform(-1.5, 1.5);
  for (auto& v : s.x.data) v = rng.uniform();
  for (int b = 0; b < batch; ++b) s.y.push_back(rng.uniform_int(classes));
  s.sample = gating::sample_gates(s.layer, rng);

  Matrix xg = s.x;
  for (int r = 0; r < batch; ++r)
    for (int c = 0; c < d; ++c) xg(r, c) *= s.sample.z[static_cast<size_t>(c)];
  ForwardCache cache;
  forward(s.model, xg, &cache);
  s.analytic = backward(s.model, s.layer, cache, s.x, &s.sample, s.y, epoch);
  return s;
}

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max(1e-8, std::fabs(a) + std::fabs(b));
}

}  // namespace

TEST_CASE("initialization is seeded and snapshotted", "[mlp]") {
  auto a = MlpModel::init(4, 100, 2, 7);
  auto b = MlpModel::init(4, 100, 2, 7);
  REQUIRE(a.w1 == b.w1);
  REQUIRE(a.w2 == b.w2);
  auto c = MlpModel::init(4, 100, 2, 8);
  REQUIRE(a.w1.data != c.w1.data);

  REQUIRE(a.weight_count() + static_cast<int>(a.b1.size() + a.b2.size()) == 702);
  REQUIRE(a.w1 == a.w1_init);
  REQUIRE(a.w2 == a.w2_init);
  REQUIRE(a.b1 == a.b1_init);
}

TEST_CASE("forward softmax normalization and bias-only behavior", "[mlp]") {
  auto m = MlpModel::init(3, 5, 3, 1);
  m.w1.fill(0.0);
  m.w2.fill(0.0);
  Matrix x(2, 3, 0.4);
  auto probs = forward(m, x);
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 3; ++c) REQUIRE(probs(b, c) == Catch::Approx(1.0 / 3.0));

  auto r = MlpModel::init(4, 6, 3, 2);
  Matrix zeros(3, 4, 0.0);
  auto p = forward(r, zeros);
  for (int b = 1; b < 3; ++b)
    for (int c = 0; c < 3; ++c) REQUIRE(p(b, c) == p(0, c));

  Rng rng(5);
  Matrix rx(8, 4);
  for (auto& v : rx.data) v = rng.uniform(-2.0, 2.0);
  auto rp = forward(r, rx);
  for (int b = 0; b < 8; ++b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += rp(b, c);
    REQUIRE(std::fabs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("loss closed forms and cost additivity", "[mlp]") {
  auto m = MlpModel::init(2, 4, 3, 3);
  m.w1.fill(0.0);
  m.w2.fill(0.0);
  Matrix x(3, 2, 0.0);
  std::vector<int> y{0, 1, 2};
  GateLayer flat = GateLayer::make({1.0, 1.0}, 1.0, 0.0, 0);
  REQUIRE(total_loss(forward(m, x), y, flat) == Catch::Approx(std::log(3.0)));

  // Confident correct predictions drive the loss toward zero.
  m.b2 = {30.0, 0.0, 0.0};
  REQUIRE(total_loss(forward(m, x), {0, 0, 0}, flat) == Catch::Approx(0.0).margin(1e-12));

  GateLayer costed = GateLayer::make({2.0, 3.0}, 1.0, 0.01, 0);
  const double base = total_loss(forward(m, x), {0, 0, 0}, flat);
  const double with_cost = total_loss(forward(m, x), {0, 0, 0}, costed);
  REQUIRE(with_cost - base == Catch::Approx(0.01 * gating::cost_loss(costed)));
}

TEST_CASE("full-model gradients match finite differences", "[mlp]") {
  auto s = make_gradcheck(6, 8, 3, 8, 0.01, 0.8, /*epoch=*/5, /*warmup=*/2, 12345);
  const double h = 1e-5;
  const double tol = 1e-4;

  auto check = [&](double analytic, double* param) {
    const double keep = *param;
    *param = keep + h;
    const double up = full_loss(s.model, s.layer, s.sample.u, s.x, s.y);
    *param = keep - h;
    const double dn = full_loss(s.model, s.layer, s.sample.u, s.x, s.y);
    *param = keep;
    REQUIRE(rel_err(analytic, (up - dn) / (2.0 * h)) <= tol);
  };

  for (size_t i = 0; i < s.model.w1.size(); ++i)
    check(s.analytic.w1.data[i], &s.model.w1.data[i]);
  for (size_t i = 0; i < s.model.b1.size(); ++i) check(s.analytic.b1[i], &s.model.b1[i]);
  for (size_t i = 0; i < s.model.w2.size(); ++i)
    check(s.analytic.w2.data[i], &s.model.w2.data[i]);
  for (size_t i = 0; i < s.model.b2.size(); ++i) check(s.analytic.b2[i], &s.model.b2[i]);
  for (size_t i = 0; i < s.layer.log_alpha.size(); ++i)
    check(s.analytic.log_alpha[i], &s.layer.log_alpha[i]);
}

TEST_CASE("warm-up detaches exactly the gate logits", "[mlp]") {
  auto during = make_gradcheck(5, 6, 2, 6, 0.02, 1.0, /*epoch=*/1, /*warmup=*/3, 99);
  for (double g : during.analytic.log_alpha) REQUIRE(g == 0.0);
  for (double g : during.analytic.w1.data) REQUIRE(std::isfinite(g));

  auto after = make_gradcheck(5, 6, 2, 6, 0.02, 1.0, /*epoch=*/3, /*warmup=*/3, 99);
  double nonzero = 0.0;
  for (double g : after.analytic.log_alpha) nonzero += std::fabs(g);
  REQUIRE(nonzero > 0.0);
  // Weight gradients are unaffected by the detach.
  REQUIRE(during.analytic.w1 == after.analytic.w1);
  REQUIRE(during.analytic.w2 == after.analytic.w2);
}

TEST_CASE("masked weights get zero gradient and stay zero", "[mlp]") {
  auto s = make_gradcheck(5, 7, 2, 4, 0.0, 1.0, 0, 0, 17);
  s.model.mask1(2, 3) = 0.0;
  s.model.mask2(4, 1) = 0.0;
  s.model.apply_mask();

  Matrix xg = s.x;
  for (int r = 0; r < xg.rows; ++r)
    for (int c = 0; c < xg.cols; ++c) xg(r, c) *= s.sample.z[static_cast<size_t>(c)];
  ForwardCache cache;
  forward(s.model, xg, &cache);
  auto g = backward(s.model, s.layer, cache, s.x, &s.sample, s.y, 0);
  REQUIRE(g.w1(2, 3) == 0.0);
  REQUIRE(g.w2(4, 1) == 0.0);

  auto cfg = TrainConfig{};
  auto adam = AdamState::make(s.model, s.layer);
  for (int step = 0; step < 5; ++step) adam_step(s.model, s.layer, g, adam, cfg);
  REQUIRE(s.model.w1(2, 3) == 0.0);
  REQUIRE(s.model.w2(4, 1) == 0.0);
}

TEST_CASE("adam fixed point and first-step magnitude", "[mlp]") {
  auto model = MlpModel::init(3, 4, 2, 21);
  GateLayer layer = GateLayer::make({1, 1, 1}, 1.0, 0.0, 0);
  auto cfg = TrainConfig{};
  auto adam = AdamState::make(model, layer);

  Gradients zero;
  zero.w1 = Matrix(3, 4);
  zero.w2 = Matrix(4, 2);
  zero.b1.assign(4, 0.0);
  zero.b2.assign(2, 0.0);
  zero.log_alpha.assign(3, 0.0);
  const auto before = model.w1;
  adam_step(model, layer, zero, adam, cfg);
  REQUIRE(model.w1 == before);

  Gradients g = zero;
  g.w1(0, 0) = 0.37;   // arbitrary positive gradient
  g.w1(1, 1) = -2.41;  // and a negative one
  auto fresh = AdamState::make(model, layer);
  const double w00 = model.w1(0, 0), w11 = model.w1(1, 1);
  adam_step(model, layer, g, fresh, cfg);
  // Bias-corrected first step is lr * g / (|g| + eps), i.e. nearly lr * sign(g).
  REQUIRE(model.w1(0, 0) == Catch::Approx(w00 - cfg.lr).epsilon(1e-4));
  REQUIRE(model.w1(1, 1) == Catch::Approx(w11 + cfg.lr).epsilon(1e-4));
}

namespace {

// Plain logistic-regression oracle trained with gradient descent; certifies
// the task is linearly separable before the MLP is asked to fit it.
double logistic_oracle_accuracy(const Matrix& x, const std::vector<int>& y) {
  std::vector<double> w(static_cast<size_t>(x.cols), 0.0);
  double b = 0.0;
  for (int iter = 0; iter < 2000; ++iter) {
    std::vector<double> gw(w.size(), 0.0);
    double gb = 0.0;
    for (int r = 0; r < x.rows; ++r) {
      double t = b;
      for (int c = 0; c < x.cols; ++c) t += w[static_cast<size_t>(c)] * x(r, c);
      const double p = 1.0 / (1.0 + std::exp(-t));
      const double d = p - y[static_cast<size_t>(r)];
      for (int c = 0; c < x.cols; ++c) gw[static_cast<size_t>(c)] += d * x(r, c);
      gb += d;
    }
    for (size_t i = 0; i < w.size(); ++i) w[i] -= 0.5 * gw[i] / x.rows;
    b -= 0.5 * gb / x.rows;
  }
  int correct = 0;
  for (int r = 0; r < x.rows; ++r) {
    double t = b;
    for (int c = 0; c < x.cols; ++c) t += w[static_cast<size_t>(c)] * x(r, c);
    correct += (t > 0.0 ? 1 : 0) == y[static_cast<size_t>(r)] ? 1 : 0;
  }
  return static_cast<double>(correct) / x.rows;
}

struct TrainedFixture {
  MlpModel model;
  GateLayer layer;
  LabeledFeatures feats;
  signal::WindowSet normalized;
};

TrainedFixture train_on_synthetic(uint64_t seed, int epochs = 40, double lambda = 0.0,
                                  int patience = 0) {
  signal::SyntheticSpec spec;
  spec.num_subjects = 4;
  spec.num_channels = 2;
  spec.sample_rate_hz = 16.0;
  spec.duration_s = 20.0;
  spec.informative = {{0, signal::FeatureKind::mean}};
  auto ds = signal::generate_synthetic(spec, seed);
  auto ws = signal::make_windows(ds, 1.0);
  auto norm = signal::fit_normalizer(ws);
  TrainedFixture f{.model = {}, .layer = {}, .feats = {}, .normalized = signal::apply_normalizer(norm, ws)};
  f.feats = training_features(f.normalized, 4);

  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.patience = patience;
  cfg.hidden = 16;
  cfg.seed = seed;
  std::vector<double> costs(8, 0.1);
  f.layer = GateLayer::make(costs, 2.0, lambda, 2);
  f.model = MlpModel::init(8, cfg.hidden, 2, seed);
  gating::GammaSchedule sched{2.0, 0.5, cfg.epochs};
  mlp::train(f.model, f.layer, f.feats.x, f.feats.y, Matrix(), {}, cfg, sched);
  return f;
}

}  // namespace

TEST_CASE("training fits a linearly separable task", "[mlp]") {
  auto f = train_on_synthetic(3);
  REQUIRE(logistic_oracle_accuracy(f.feats.x, f.feats.y) == 1.0);

  const auto z = gating::deterministic_gates(f.layer);
  int correct = 0;
  for (int r = 0; r < f.feats.x.rows; ++r) {
    std::vector<double> row(8);
    for (int c = 0; c < 8; ++c) row[static_cast<size_t>(c)] = f.feats.x(r, c) * z[static_cast<size_t>(c)];
    const auto p = forward_row(f.model, row);
    correct += (p[1] > p[0] ? 1 : 0) == f.feats.y[static_cast<size_t>(r)] ? 1 : 0;
  }
  REQUIRE(static_cast<double>(correct) / f.feats.x.rows >= 0.99);
}

TEST_CASE("patience zero runs every epoch; history is bounded", "[mlp]") {
  auto f = train_on_synthetic(5, 12, 0.0, 0);
  // re-run with explicit history capture
  signal::SyntheticSpec spec;
  spec.num_subjects = 2;
  spec.num_channels = 1;
  spec.sample_rate_hz = 16.0;
  spec.duration_s = 10.0;
  spec.informative = {{0, signal::FeatureKind::mean}};
  auto ds = signal::generate_synthetic(spec, 5);
  auto ws = signal::make_windows(ds, 1.0);
  auto feats = training_features(signal::apply_normalizer(signal::fit_normalizer(ws), ws), 4);

  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.patience = 0;
  cfg.hidden = 8;
  auto layer = GateLayer::make({0.1, 0.1, 0.1, 0.1}, 1.0, 0.0, 0);
  auto model = MlpModel::init(4, 8, 2, 1);
  auto hist = train(model, layer, feats.x, feats.y, feats.x, feats.y, cfg,
                    gating::GammaSchedule{1.0, 1.0, 12});
  REQUIRE(hist.epochs.size() == 12);

  cfg.patience = 2;
  auto model2 = MlpModel::init(4, 8, 2, 1);
  auto layer2 = GateLayer::make({0.1, 0.1, 0.1, 0.1}, 1.0, 0.0, 0);
  auto hist2 = train(model2, layer2, feats.x, feats.y, feats.x, feats.y, cfg,
                     gating::GammaSchedule{1.0, 1.0, 12});
  REQUIRE(hist2.epochs.size() <= 12);

  REQUIRE_THROWS_AS(train(model, layer, Matrix(), {}, feats.x, feats.y, cfg,
                          gating::GammaSchedule{1.0, 1.0, 12}),
                    UsageError);
}

TEST_CASE("training is deterministic per seed", "[mlp]") {
  auto a = train_on_synthetic(9);
  auto b = train_on_synthetic(9);
  REQUIRE(a.model.w1 == b.model.w1);
  REQUIRE(a.model.w2 == b.model.w2);
  REQUIRE(a.layer.log_alpha == b.layer.log_alpha);
}

TEST_CASE("weight quantization bounds and input grid", "[mlp]") {
  auto f = train_on_synthetic(13);
  auto q = quantize_weights(f.model, 8, 4);
  double mx = 0.0;
  for (double w : f.model.w1.data) mx = std::max(mx, std::fabs(w));
  REQUIRE(q.scale1 == Catch::Approx(mx / 127.0));
  int max_code = 0;
  for (int i = 0; i < f.model.w1.rows; ++i)
    for (int j = 0; j < f.model.w1.cols; ++j) {
      const size_t idx = static_cast<size_t>(i) * 16 + static_cast<size_t>(j);
      max_code = std::max(max_code, std::abs(q.q1[idx]));
      REQUIRE(std::fabs(f.model.w1(i, j) - q.q1[idx] * q.scale1) <= q.scale1 / 2.0 + 1e-15);
    }
  REQUIRE(max_code == 127);

  auto zeroed = f.model;
  zeroed.w2.fill(0.0);
  REQUIRE(quantize_weights(zeroed).scale2 == 1.0);

  REQUIRE(quantize_input(0.5, 4) == Catch::Approx(8.0 / 15.0));
  REQUIRE(quantize_input(0.0, 4) == 0.0);
  REQUIRE(quantize_input(1.0, 4) == 1.0);
}

TEST_CASE("evaluation paths agree under ideal analog and default adc", "[mlp]") {
  auto f = train_on_synthetic(23);
  auto layer = f.layer;
  gating::prune_gates(layer, 0.05);
  auto q = quantize_weights(f.model);
  const auto acfg =
      analog::AnalogConfig::ideal(f.normalized.window_s(), f.normalized.samples_per_window);
  const adc::AdcConfig dcfg;
  auto ideal = evaluate(q, layer, f.normalized, acfg, dcfg, FeaturePath::ideal);
  auto hw = evaluate(q, layer, f.normalized, acfg, dcfg, FeaturePath::analog_adc);
  REQUIRE(ideal.predictions == hw.predictions);
  REQUIRE(ideal.accuracy == hw.accuracy);
  REQUIRE(ideal.accuracy > 0.9);

  REQUIRE_THROWS_AS(evaluate(q, f.layer, f.normalized, acfg, dcfg, FeaturePath::ideal),
                    UsageError);
}

TEST_CASE("degenerate evaluations", "[mlp]") {
  auto model = MlpModel::init(4, 6, 2, 3);
  model.b2 = {0.0, 5.0};  // always predicts class 1

  signal::WindowSet ws;
  ws.num_channels = 1;
  ws.num_classes = 2;
  ws.samples_per_window = 4;
  ws.t_step_s = 0.25;
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    signal::Window w;
    w.t_step_s = 0.25;
    w.label = 1;
    w.samples = Matrix(1, 4);
    for (auto& v : w.samples.data) v = rng.uniform();
    ws.windows.push_back(w);
  }

  GateLayer layer = GateLayer::make({0.1, 0.1, 0.1, 0.1}, 1.0, 0.0, 0);
  layer.frozen_mask = std::vector<uint8_t>{1, 1, 1, 1};
  const auto acfg = analog::AnalogConfig::ideal(1.0, 4);
  const adc::AdcConfig dcfg;
  REQUIRE(evaluate(model, layer, ws, acfg, dcfg, FeaturePath::analog_adc).accuracy == 1.0);

  // Empty hard mask reduces to the bias-only classifier on both paths.
  GateLayer closed = layer;
  closed.frozen_mask = std::vector<uint8_t>{0, 0, 0, 0};
  auto a = evaluate(model, closed, ws, acfg, dcfg, FeaturePath::ideal);
  auto b = evaluate(model, closed, ws, acfg, dcfg, FeaturePath::analog_adc);
  std::vector<double> zeros(4, 0.0);
  const auto p = forward_row(model, zeros);
  const int bias_pred = p[1] > p[0] ? 1 : 0;
  for (int pred : a.predictions) REQUIRE(pred == bias_pred);
  REQUIRE(a.predictions == b.predictions);
}
