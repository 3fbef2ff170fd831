// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexml/checkpoint.hpp"
#include "flexml/config.hpp"
#include "flexml/hwcost.hpp"
#include "flexml/prune.hpp"

namespace flexml::codesign {

using signal::FeatureId;

/// One candidate design from the sweep: a fold, a gate threshold, and the
/// resulting selection, accuracy pair, and hardware report.
struct ParetoPoint {
  int fold = 0;
  double tau = 0.0;
  double lambda = 0.0;
  double gamma_end = 0.0;
  std::vector<FeatureId> selected;
  double sparsity = 0.0;
  double acc_ideal = 0.0;
  double acc_analog = 0.0;
  hwcost::CostReport cost;
  bool realtime_ok = false;
  double realtime_margin_ms = 0.0;
  std::string checkpoint_path;
};

struct PipelineOutput {
  std::vector<ParetoPoint> points;
  std::vector<Checkpoint> checkpoints;  // parallel to points
};

// --- JSON for reports --------------------------------------------------------

inline void to_json(nlohmann::json& j, const ParetoPoint& p) {
  nlohmann::json sel = nlohmann::json::array();
  for (const auto& f : p.selected)
    sel.push_back({{"channel", f.channel}, {"kind", signal::to_string(f.kind)}});
  j = nlohmann::json{
      {"fold", p.fold},
      {"tau", p.tau},
      {"lambda", p.lambda},
      {"gamma_end", p.gamma_end},
      {"selected", std::move(sel)},
      {"sparsity", p.sparsity},
      {"acc_ideal", p.acc_ideal},
      {"acc_analog", p.acc_analog},
      {"cost",
       {{"area_mm2",
         {{"analog_features", p.cost.area_analog_mm2},
          {"adc", p.cost.area_adc_mm2},
          {"classifier", p.cost.area_classifier_mm2},
          {"total", p.cost.area_total_mm2}}},
        {"power_mw",
         {{"analog_features", p.cost.power_analog_mw},
          {"adc", p.cost.power_adc_mw},
          {"classifier", p.cost.power_classifier_mw},
          {"active", p.cost.power_active_mw}}},
        {"latency_ms",
         {{"adc_total", p.cost.latency_adc_ms},
          {"mlp", p.cost.latency_mlp_ms},
          {"total", p.cost.latency_total_ms}}},
        {"energy_uj", p.cost.energy_uj}}},
      {"realtime_ok", p.realtime_ok},
      {"realtime_margin_ms", p.realtime_margin_ms},
      {"checkpoint", p.checkpoint_path}};
}

inline void from_json(const nlohmann::json& j, ParetoPoint& p) {
  p.fold = j.at("fold").get<int>();
  p.tau = j.at("tau").get<double>();
  p.lambda = j.at("lambda").get<double>();
  p.gamma_end = j.at("gamma_end").get<double>();
  p.selected.clear();
  for (const auto& f : j.at("selected"))
    p.selected.push_back(
        {f.at("channel").get<int>(), signal::feature_kind_from_string(f.at("kind"))});
  p.sparsity = j.at("sparsity").get<double>();
  p.acc_ideal = j.at("acc_ideal").get<double>();
  p.acc_analog = j.at("acc_analog").get<double>();
  const auto& c = j.at("cost");
  p.cost.area_analog_mm2 = c.at("area_mm2").at("analog_features").get<double>();
  p.cost.area_adc_mm2 = c.at("area_mm2").at("adc").get<double>();
  p.cost.area_classifier_mm2 = c.at("area_mm2").at("classifier").get<double>();
  p.cost.area_total_mm2 = c.at("area_mm2").at("total").get<double>();
  p.cost.power_analog_mw = c.at("power_mw").at("analog_features").get<double>();
  p.cost.power_adc_mw = c.at("power_mw").at("adc").get<double>();
  p.cost.power_classifier_mw = c.at("power_mw").at("classifier").get<double>();
  p.cost.power_active_mw = c.at("power_mw").at("active").get<double>();
  p.cost.latency_adc_ms = c.at("latency_ms").at("adc_total").get<double>();
  p.cost.latency_mlp_ms = c.at("latency_ms").at("mlp").get<double>();
  p.cost.latency_total_ms = c.at("latency_ms").at("total").get<double>();
  p.cost.energy_uj = c.at("energy_uj").get<double>();
  p.realtime_ok = j.at("realtime_ok").get<bool>();
  p.realtime_margin_ms = j.at("realtime_margin_ms").get<double>();
  p.checkpoint_path = j.at("checkpoint").get<std::string>();
}

// --- Pareto filtering --------------------------------------------------------

/// Non-dominated subset in the (deployed accuracy, total area) plane. A
/// point survives unless some other point is at least as accurate and at
/// most as large with one of the two strict; exact ties survive.
inline std::vector<ParetoPoint> pareto_filter(const std::vector<ParetoPoint>& pts) {
  std::vector<ParetoPoint> out;
  for (size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (size_t k = 0; k < pts.size() && !dominated; ++k) {
      if (k == i) continue;
      const bool geq_acc = pts[k].acc_analog >= pts[i].acc_analog;
      const bool leq_area = pts[k].cost.area_total_mm2 <= pts[i].cost.area_total_mm2;
      const bool strict = pts[k].acc_analog > pts[i].acc_analog ||
                          pts[k].cost.area_total_mm2 < pts[i].cost.area_total_mm2;
      dominated = geq_acc && leq_area && strict;
    }
    if (!dominated) out.push_back(pts[i]);
  }
  return out;
}

// --- Pipeline ----------------------------------------------------------------

namespace detail {

struct FoldData {
  signal::WindowSet train_n, val_n, test_n;  // normalized
  mlp::LabeledFeatures feats_train, feats_val;
};

/// Subject-disjoint validation carve-out plus normalization fitted on the
/// remaining training subjects' windows only.
inline FoldData prepare_fold(const signal::WindowSet& all, const signal::Fold& fold,
                             const RunConfig& cfg, int fold_idx) {
  std::vector<int> train_subjects = fold.train_subjects;
  Rng rng(Rng::derive(cfg.seed, 0x76616cull * 131 + static_cast<uint64_t>(fold_idx)));
  rng.shuffle(train_subjects);
  int n_val = static_cast<int>(std::llround(cfg.train.val_fraction *
                                            static_cast<double>(train_subjects.size())));
  n_val = std::clamp(n_val, 1, static_cast<int>(train_subjects.size()) - 1);
  const std::vector<int> val_subjects(train_subjects.begin(), train_subjects.begin() + n_val);
  const std::vector<int> fit_subjects(train_subjects.begin() + n_val, train_subjects.end());

  const auto train_ws = signal::select_subjects(all, fit_subjects);
  if (train_ws.empty()) throw DataError("fold has no training windows");
  const auto norm = signal::fit_normalizer(train_ws);

  FoldData d;
  d.train_n = signal::apply_normalizer(norm, train_ws);
  d.val_n = signal::apply_normalizer(norm, signal::select_subjects(all, val_subjects));
  d.test_n = signal::apply_normalizer(norm, signal::select_subjects(all, fold.test_subjects));
  d.feats_train = mlp::training_features(d.train_n, cfg.train.input_bits);
  d.feats_val = mlp::training_features(d.val_n, cfg.train.input_bits);
  return d;
}

}  // namespace detail

/// Full co-design sweep: per fold, train with stochastic gates, then for
/// every threshold freeze the selection, prune-and-retrain the classifier,
/// quantize, evaluate both feature paths, and cost the system. Returns every
/// candidate point (Pareto filtering is the caller's choice).
inline PipelineOutput run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const signal::Dataset ds = cfg.load_dataset();
  const signal::WindowSet all = signal::make_windows(ds, cfg.window_s);
  if (all.empty()) throw DataError("pipeline: dataset yields no windows");
  const int spw = all.samples_per_window;
  const double realized_window_s = all.window_s();
  const auto acfg = cfg.analog_config(realized_window_s, spw);
  const auto order = signal::candidate_features(all.num_channels);
  const auto costs = hwcost::feature_cost_vector(order, cfg.lut);

  const auto plan = signal::kfold_split(ds, cfg.kfold, cfg.seed);

  PipelineOutput out;
  for (int f = 0; f < plan.k; ++f) {
    const auto data = detail::prepare_fold(all, plan.folds[static_cast<size_t>(f)], cfg, f);

    auto layer = gating::GateLayer::make(costs, cfg.gamma.start, cfg.lambda, cfg.warmup_epochs,
                                         cfg.gate_init_log_alpha);
    auto model = mlp::MlpModel::init(static_cast<int>(order.size()), cfg.train.hidden,
                                     ds.num_classes, Rng::derive(cfg.seed, 7000 + f));
    mlp::TrainConfig tcfg = cfg.train;
    tcfg.seed = Rng::derive(cfg.seed, 9000 + f);
    gating::GammaSchedule sched = cfg.gamma;
    sched.total_epochs = tcfg.epochs;
    mlp::train(model, layer, data.feats_train.x, data.feats_train.y, data.feats_val.x,
               data.feats_val.y, tcfg, sched);

    for (size_t ti = 0; ti < cfg.tau_list.size(); ++ti) {
      const double tau = cfg.tau_list[ti];
      auto layer_t = layer;
      const auto hard = gating::prune_gates(layer_t, tau);
      auto model_t = model;

      mlp::TrainConfig rcfg = tcfg;
      rcfg.seed = Rng::derive(cfg.seed, 11000 + f * 100 + static_cast<int>(ti));
      prune::ltp_run(model_t, layer_t, data.feats_train.x, data.feats_train.y, data.feats_val.x,
                     data.feats_val.y, cfg.sparsity, rcfg);

      model_t.apply_mask();
      const auto q = mlp::quantize_weights(model_t, cfg.train.weight_bits, cfg.train.input_bits);

      std::vector<FeatureId> selected;
      for (size_t i = 0; i < hard.size(); ++i)
        if (hard[i]) selected.push_back(order[i]);

      ParetoPoint p;
      p.fold = f;
      p.tau = tau;
      p.lambda = cfg.lambda;
      p.gamma_end = cfg.gamma.end;
      p.selected = selected;
      p.sparsity = model_t.sparsity();
      p.acc_ideal =
          mlp::evaluate(q, layer_t, data.test_n, acfg, cfg.adc, mlp::FeaturePath::ideal).accuracy;
      p.acc_analog =
          mlp::evaluate(q, layer_t, data.test_n, acfg, cfg.adc, mlp::FeaturePath::analog_adc)
              .accuracy;
      p.cost = hwcost::system_cost(selected, q, model_t.mask1, model_t.mask2, cfg.adc, cfg.lut,
                                   realized_window_s);
      const auto rt = hwcost::realtime_check(p.cost, cfg.lut.budget_ms, realized_window_s);
      p.realtime_ok = rt.ok;
      p.realtime_margin_ms = rt.margin_ms;

      out.points.push_back(std::move(p));
      out.checkpoints.push_back(
          Checkpoint::from_model(model_t, layer_t, q, order, ds.channel_names));
    }
  }
  return out;
}

// --- Hyperparameter search -----------------------------------------------------

struct TuneTrial {
  double lambda = 0.0;
  double gamma_end = 0.0;
  double val_accuracy = 0.0;
  double norm_cost = 0.0;
  double score = 0.0;
};

struct TuneResult {
  double lambda = 0.0;
  double gamma_end = 0.0;
  std::vector<TuneTrial> trials;
};

/// Seeded random search over (lambda, gamma_end), log-uniform in the
/// configured ranges. Each trial trains briefly on fold 0 and scores
/// validation accuracy minus mu times the normalized expected cost.
inline TuneResult tune_hyperparams(const RunConfig& cfg, int trials, uint64_t seed) {
  if (trials < 1) throw ConfigError("tune: trials must be >= 1");
  const signal::Dataset ds = cfg.load_dataset();
  const signal::WindowSet all = signal::make_windows(ds, cfg.window_s);
  if (all.empty()) throw DataError("tune: dataset yields no windows");
  const auto order = signal::candidate_features(all.num_channels);
  const auto costs = hwcost::feature_cost_vector(order, cfg.lut);
  const double cost_total = std::accumulate(costs.begin(), costs.end(), 0.0);
  const auto plan = signal::kfold_split(ds, cfg.kfold, cfg.seed);
  const auto data = detail::prepare_fold(all, plan.folds[0], cfg, 0);

  Rng rng(Rng::derive(seed, 0x74756e65ull));
  TuneResult result;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    TuneTrial trial;
    trial.lambda =
        std::exp(rng.uniform(std::log(cfg.tune.lambda_lo), std::log(cfg.tune.lambda_hi)));
    trial.gamma_end =
        std::exp(rng.uniform(std::log(cfg.tune.gamma_end_lo), std::log(cfg.tune.gamma_end_hi)));

    auto layer = gating::GateLayer::make(costs, cfg.gamma.start, trial.lambda,
                                         cfg.warmup_epochs, cfg.gate_init_log_alpha);
    auto model = mlp::MlpModel::init(static_cast<int>(order.size()), cfg.train.hidden,
                                     ds.num_classes, Rng::derive(seed, 5000 + t));
    mlp::TrainConfig tcfg = cfg.train;
    tcfg.epochs = cfg.tune.epochs;
    tcfg.patience = std::min(tcfg.patience, tcfg.epochs);
    tcfg.seed = Rng::derive(seed, 6000 + t);
    gating::GammaSchedule sched{cfg.gamma.start, trial.gamma_end, tcfg.epochs};
    mlp::train(model, layer, data.feats_train.x, data.feats_train.y, data.feats_val.x,
               data.feats_val.y, tcfg, sched);

    const auto z = gating::deterministic_gates(layer);
    int correct = 0;
    for (int r = 0; r < data.feats_val.x.rows; ++r) {
      std::vector<double> row(static_cast<size_t>(data.feats_val.x.cols));
      for (int c = 0; c < data.feats_val.x.cols; ++c)
        row[static_cast<size_t>(c)] = data.feats_val.x(r, c) * z[static_cast<size_t>(c)];
      const auto probs = mlp::forward_row(model, row);
      const int pred =
          static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      correct += pred == data.feats_val.y[static_cast<size_t>(r)] ? 1 : 0;
    }
    trial.val_accuracy =
        data.feats_val.x.rows > 0 ? static_cast<double>(correct) / data.feats_val.x.rows : 0.0;
    trial.norm_cost = cost_total > 0.0 ? gating::cost_loss(layer) / cost_total : 0.0;
    trial.score = trial.val_accuracy - cfg.tune.mu * trial.norm_cost;
    if (trial.score > best_score) {
      best_score = trial.score;
      result.lambda = trial.lambda;
      result.gamma_end = trial.gamma_end;
    }
    result.trials.push_back(trial);
  }
  return result;
}

// --- Export / report -----------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string feature_list_string(const std::vector<FeatureId>& sel) {
  std::string s;
  for (size_t i = 0; i < sel.size(); ++i) {
    if (i > 0) s += ';';
    s += signal::to_string(sel[i]);
  }
  return s;
}

}  // namespace detail

inline const char* kParetoCsvHeader =
    "fold,tau,lambda,selected_count,features,sparsity,acc_ideal,acc_analog,"
    "area_mm2_total,area_mm2_analog,area_mm2_adc,area_mm2_classifier,"
    "power_mw,energy_uj,latency_ms,realtime_ok";

/// Writes pareto.csv (fixed column order), pareto.json, and one checkpoint
/// per point under <dir>/checkpoints/; fills each point's checkpoint path.
inline void export_results(PipelineOutput& out, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "checkpoints", ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "'");

  for (size_t i = 0; i < out.points.size(); ++i) {
    auto& p = out.points[i];
    char name[64];
    std::snprintf(name, sizeof(name), "fold%d_tau%g.json", p.fold, p.tau);
    p.checkpoint_path = (fs::path(dir) / "checkpoints" / name).string();
    if (i < out.checkpoints.size()) save_checkpoint(out.checkpoints[i], p.checkpoint_path);
  }

  const auto csv_path = (fs::path(dir) / "pareto.csv").string();
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write '" + csv_path + "'");
  csv << kParetoCsvHeader << "\n";
  for (const auto& p : out.points) {
    csv << p.fold << ',' << detail::fmt(p.tau) << ',' << detail::fmt(p.lambda) << ','
        << p.selected.size() << ',' << detail::feature_list_string(p.selected) << ','
        << detail::fmt(p.sparsity) << ',' << detail::fmt(p.acc_ideal) << ','
        << detail::fmt(p.acc_analog) << ',' << detail::fmt(p.cost.area_total_mm2) << ','
        << detail::fmt(p.cost.area_analog_mm2) << ',' << detail::fmt(p.cost.area_adc_mm2) << ','
        << detail::fmt(p.cost.area_classifier_mm2) << ',' << detail::fmt(p.cost.power_active_mw)
        << ',' << detail::fmt(p.cost.energy_uj) << ',' << detail::fmt(p.cost.latency_total_ms)
        << ',' << (p.realtime_ok ? 1 : 0) << "\n";
  }
  if (!csv) throw IoError("write failed for '" + csv_path + "'");

  const auto json_path = (fs::path(dir) / "pareto.json").string();
  std::ofstream js(json_path);
  if (!js) throw IoError("cannot write '" + json_path + "'");
  js << nlohmann::json(out.points).dump(1) << "\n";
  if (!js) throw IoError("write failed for '" + json_path + "'");
}

inline std::vector<ParetoPoint> load_pareto_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("pareto.json parse: ") + e.what());
  }
  return j.get<std::vector<ParetoPoint>>();
}

/// Human-readable summary: per-tau fold averages plus each fold's
/// non-dominated front.
inline std::string report(const std::vector<ParetoPoint>& pts) {
  std::ostringstream os;
  os << "tau        n  acc_ideal      acc_analog     area_mm2       energy_uj     latency_ms\n";
  std::vector<double> taus;
  for (const auto& p : pts)
    if (std::find(taus.begin(), taus.end(), p.tau) == taus.end()) taus.push_back(p.tau);
  std::sort(taus.begin(), taus.end());
  const auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.empty() ? 1.0 : static_cast<double>(v.size());
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(s2 / (static_cast<double>(v.size()) - 1.0)) : 0.0;
    return std::pair<double, double>{m, sd};
  };
  for (double tau : taus) {
    std::vector<double> ai, aa, area, en, lat;
    for (const auto& p : pts) {
      if (p.tau != tau) continue;
      ai.push_back(p.acc_ideal);
      aa.push_back(p.acc_analog);
      area.push_back(p.cost.area_total_mm2);
      en.push_back(p.cost.energy_uj);
      lat.push_back(p.cost.latency_total_ms);
    }
    const auto [mi, si] = mean_std(ai);
    const auto [ma, sa] = mean_std(aa);
    const auto [mr, sr] = mean_std(area);
    const auto [me, se] = mean_std(en);
    const auto [ml, sl] = mean_std(lat);
    char line[256];
    std::snprintf(line, sizeof(line),
                  "%-9g %3zu %6.3f+-%.3f %6.3f+-%.3f %7.3f+-%.3f %7.4f+-%.4f %7.3f+-%.3f\n", tau,
                  ai.size(), mi, si, ma, sa, mr, sr, me, se, ml, sl);
    os << line;
  }

  std::vector<int> folds;
  for (const auto& p : pts)
    if (std::find(folds.begin(), folds.end(), p.fold) == folds.end()) folds.push_back(p.fold);
  std::sort(folds.begin(), folds.end());
  for (int f : folds) {
    std::vector<ParetoPoint> fold_pts;
    for (const auto& p : pts)
      if (p.fold == f) fold_pts.push_back(p);
    const auto front = pareto_filter(fold_pts);
    os << "fold " << f << " front:";
    for (const auto& p : front) {
      char item[128];
      std::snprintf(item, sizeof(item), " [tau=%g acc=%.3f area=%.3fmm2 feats=%zu]", p.tau,
                    p.acc_analog, p.cost.area_total_mm2, p.selected.size());
      os << item;
    }
    os << "\n";
  }
  return os.str();
}

// --- Analog validation ----------------------------------------------------------

struct NmseEntry {
  FeatureId id;
  double nmse = 0.0;
};

/// Per-feature normalized error of the behavioral analog chain against the
/// software references, both expressed in volts. Sum traces carry the
/// residual software factor before comparison.
inline std::vector<NmseEntry> feature_nmse(const signal::WindowSet& normalized,
                                           const analog::AnalogConfig& acfg) {
  if (normalized.empty()) throw UsageError("feature_nmse: empty window set");
  const auto order = signal::candidate_features(normalized.num_channels);
  std::vector<std::vector<double>> hw(order.size()), sw(order.size());
  for (const auto& win : normalized.windows) {
    const auto bank = analog::run_extractor_bank(win, order, acfg);
    const auto refs = signal::reference_features(win);
    for (size_t i = 0; i < order.size(); ++i) {
      double hw_v = bank[i].voltage;
      double sw_v = 0.0;
      if (order[i].kind == signal::FeatureKind::sum) {
        hw_v *= acfg.residual_scale;
        for (int t = 0; t < win.samples.cols; ++t)
          sw_v += analog::to_voltage(win.samples(order[i].channel, t), acfg);
      } else {
        sw_v = analog::to_voltage(refs[i].value, acfg);
      }
      hw[i].push_back(hw_v);
      sw[i].push_back(sw_v);
    }
  }
  std::vector<NmseEntry> out;
  for (size_t i = 0; i < order.size(); ++i)
    out.push_back({order[i], analog::nmse(hw[i], sw[i])});
  return out;
}

}  // namespace flexml::codesign
