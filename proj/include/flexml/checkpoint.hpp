// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexml/errors.hpp"
#include "flexml/gating.hpp"
#include "flexml/mlp.hpp"
#include "flexml/signal.hpp"

namespace flexml {

/// Versioned, self-describing model container: architecture, float
/// parameters, pruning mask, gate state, and quantization scales. Stored as
/// JSON; version bumps on any breaking layout change.
struct Checkpoint {
  static constexpr int kVersion = 1;

  mlp::ModelArch arch;
  Matrix w1, w2;
  std::vector<double> b1, b2;
  Matrix mask1, mask2;
  gating::GateLayer gate;
  double scale1 = 1.0, scale2 = 1.0;
  int weight_bits = 8;
  int input_bits = 4;
  std::vector<signal::FeatureId> feature_order;
  std::vector<std::string> channel_names;

  static Checkpoint from_model(const mlp::MlpModel& m, const gating::GateLayer& layer,
                               const mlp::QuantizedModel& q,
                               const std::vector<signal::FeatureId>& order,
                               std::vector<std::string> channels) {
    Checkpoint c;
    c.arch = m.arch;
    c.w1 = m.w1;
    c.w2 = m.w2;
    c.b1 = m.b1;
    c.b2 = m.b2;
    c.mask1 = m.mask1;
    c.mask2 = m.mask2;
    c.gate = layer;
    c.scale1 = q.scale1;
    c.scale2 = q.scale2;
    c.weight_bits = q.weight_bits;
    c.input_bits = q.input_bits;
    c.feature_order = order;
    c.channel_names = std::move(channels);
    return c;
  }

  mlp::MlpModel to_model() const {
    mlp::MlpModel m;
    m.arch = arch;
    m.w1 = w1;
    m.w2 = w2;
    m.b1 = b1;
    m.b2 = b2;
    m.mask1 = mask1;
    m.mask2 = mask2;
    // A deployable checkpoint carries no training snapshot; treat the stored
    // parameters as the rewind point.
    m.w1_init = w1;
    m.w2_init = w2;
    m.b1_init = b1;
    m.b2_init = b2;
    return m;
  }

  mlp::QuantizedModel to_quantized() const {
    mlp::MlpModel m = to_model();
    m.apply_mask();
    return mlp::quantize_weights(m, weight_bits, input_bits);
  }
};

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(static_cast<int>(j.size()), j.empty() ? 0 : static_cast<int>(j[0].size()));
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) m(r, c) = j[static_cast<size_t>(r)][static_cast<size_t>(c)].get<double>();
  return m;
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const Checkpoint& c) {
  nlohmann::json gate = {{"log_alpha", c.gate.log_alpha},
                         {"gamma", c.gate.gamma},
                         {"lambda", c.gate.lambda},
                         {"warmup_epochs", c.gate.warmup_epochs},
                         {"costs", c.gate.costs}};
  if (c.gate.frozen_mask.has_value())
    gate["frozen_mask"] = *c.gate.frozen_mask;
  else
    gate["frozen_mask"] = nullptr;

  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : c.feature_order)
    features.push_back({{"channel", f.channel}, {"kind", signal::to_string(f.kind)}});

  j = nlohmann::json{
      {"version", Checkpoint::kVersion},
      {"arch", {{"d", c.arch.d}, {"hidden", c.arch.hidden}, {"classes", c.arch.classes},
                {"activation", "relu"}}},
      {"params",
       {{"w1", detail::matrix_to_json(c.w1)}, {"b1", c.b1},
        {"w2", detail::matrix_to_json(c.w2)}, {"b2", c.b2}}},
      {"mask", {{"w1", detail::matrix_to_json(c.mask1)}, {"w2", detail::matrix_to_json(c.mask2)}}},
      {"gate", std::move(gate)},
      {"quant",
       {{"weight_bits", c.weight_bits}, {"input_bits", c.input_bits},
        {"scale_w1", c.scale1}, {"scale_w2", c.scale2}}},
      {"features", std::move(features)},
      {"channels", c.channel_names}};
}

inline void from_json(const nlohmann::json& j, Checkpoint& c) {
  if (j.at("version").get<int>() != Checkpoint::kVersion)
    throw DataError("checkpoint: unsupported version");
  const auto& arch = j.at("arch");
  c.arch.d = arch.at("d").get<int>();
  c.arch.hidden = arch.at("hidden").get<int>();
  c.arch.classes = arch.at("classes").get<int>();
  const auto& p = j.at("params");
  c.w1 = detail::matrix_from_json(p.at("w1"));
  c.w2 = detail::matrix_from_json(p.at("w2"));
  c.b1 = p.at("b1").get<std::vector<double>>();
  c.b2 = p.at("b2").get<std::vector<double>>();
  c.mask1 = detail::matrix_from_json(j.at("mask").at("w1"));
  c.mask2 = detail::matrix_from_json(j.at("mask").at("w2"));
  const auto& g = j.at("gate");
  c.gate.log_alpha = g.at("log_alpha").get<std::vector<double>>();
  c.gate.gamma = g.at("gamma").get<double>();
  c.gate.lambda = g.at("lambda").get<double>();
  c.gate.warmup_epochs = g.at("warmup_epochs").get<int>();
  c.gate.costs = g.at("costs").get<std::vector<double>>();
  if (!g.at("frozen_mask").is_null())
    c.gate.frozen_mask = g.at("frozen_mask").get<std::vector<uint8_t>>();
  const auto& q = j.at("quant");
  c.weight_bits = q.at("weight_bits").get<int>();
  c.input_bits = q.at("input_bits").get<int>();
  c.scale1 = q.at("scale_w1").get<double>();
  c.scale2 = q.at("scale_w2").get<double>();
  c.feature_order.clear();
  for (const auto& f : j.at("features"))
    c.feature_order.push_back(
        {f.at("channel").get<int>(), signal::feature_kind_from_string(f.at("kind"))});
  c.channel_names = j.at("channels").get<std::vector<std::string>>();
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  nlohmann::json j = c;
  out << j.dump(1) << "\n";
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint '" + path + "': " + e.what());
  }
  return j.get<Checkpoint>();
}

}  // namespace flexml
