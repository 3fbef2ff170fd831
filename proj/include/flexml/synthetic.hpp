// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flexml/errors.hpp"
#include "flexml/rng.hpp"
#include "flexml/signal.hpp"

namespace flexml::signal {

/// Desk-scale stand-in for real wearable recordings. Each window's class
/// drives the window statistic of every informative (channel, kind) pair;
/// all other channels carry label-independent noise.
struct SyntheticSpec {
  int num_subjects = 10;
  int num_channels = 3;
  double sample_rate_hz = 32.0;
  double duration_s = 30.0;
  int num_classes = 2;
  std::vector<FeatureId> informative;
  double window_s = 1.0;  // statistic grid; align make_windows with this
};

namespace detail {

struct ChannelPlan {
  bool has_mean = false;  // mean or sum target
  bool has_max = false;
  bool has_min = false;
};

// Class targets are spread over a fixed band per kind; window jitter is the
// declared bounded noise on top of the class signal.
inline double class_target(FeatureKind kind, int cls, int num_classes) {
  const double f = num_classes > 1 ? static_cast<double>(cls) / (num_classes - 1) : 0.0;
  switch (kind) {
    case FeatureKind::mean:
    case FeatureKind::sum: return 0.3 + 0.4 * f;
    case FeatureKind::max: return 0.58 + 0.34 * f;
    case FeatureKind::min: return 0.08 + 0.34 * f;
  }
  return 0.5;
}

}  // namespace detail

inline Dataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  if (spec.informative.empty())
    throw ConfigError("synthetic spec: need at least one informative feature");
  if (spec.num_classes < 2) throw ConfigError("synthetic spec: num_classes must be >= 2");
  if (spec.num_subjects < 1 || spec.num_channels < 1)
    throw ConfigError("synthetic spec: need at least one subject and one channel");
  if (spec.sample_rate_hz <= 0.0 || spec.duration_s <= 0.0 || spec.window_s <= 0.0)
    throw ConfigError("synthetic spec: rates and durations must be positive");
  for (const FeatureId& f : spec.informative) {
    if (f.channel < 0 || f.channel >= spec.num_channels)
      throw ConfigError("synthetic spec: informative feature references unknown channel " +
                        std::to_string(f.channel));
  }

  const int spw = static_cast<int>(std::llround(spec.window_s * spec.sample_rate_hz));
  if (spw < 2) throw ConfigError("synthetic spec: window must span at least 2 samples");
  const int total = static_cast<int>(std::llround(spec.duration_s * spec.sample_rate_hz));
  const int n_windows = total / spw;
  if (n_windows < 1) throw ConfigError("synthetic spec: duration shorter than one window");

  std::vector<detail::ChannelPlan> plans(static_cast<size_t>(spec.num_channels));
  for (const FeatureId& f : spec.informative) {
    auto& p = plans[static_cast<size_t>(f.channel)];
    if (f.kind == FeatureKind::mean || f.kind == FeatureKind::sum) p.has_mean = true;
    if (f.kind == FeatureKind::max) p.has_max = true;
    if (f.kind == FeatureKind::min) p.has_min = true;
  }

  Dataset ds;
  ds.sample_rate_hz = spec.sample_rate_hz;
  ds.num_classes = spec.num_classes;
  for (int c = 0; c < spec.num_channels; ++c) ds.channel_names.push_back("ch" + std::to_string(c));

  Rng rng(Rng::derive(seed, 0x73796e7468ull));

  for (int s = 0; s < spec.num_subjects; ++s) {
    Subject sub;
    sub.id = "s" + std::to_string(s);
    sub.channels.assign(static_cast<size_t>(spec.num_channels),
                        std::vector<double>(static_cast<size_t>(total), 0.0));
    sub.labels.assign(static_cast<size_t>(total), 0);

    for (int w = 0; w < n_windows; ++w) {
      const int cls = rng.uniform_int(spec.num_classes);
      const int base_idx = w * spw;
      for (int t = 0; t < spw; ++t) sub.labels[static_cast<size_t>(base_idx + t)] = cls;

      for (int c = 0; c < spec.num_channels; ++c) {
        auto& ch = sub.channels[static_cast<size_t>(c)];
        const auto& plan = plans[static_cast<size_t>(c)];

        if (plan.has_mean) {
          // Center the noise so the window mean lands exactly on target+jitter.
          const double target =
              detail::class_target(FeatureKind::mean, cls, spec.num_classes) +
              rng.uniform(-0.05, 0.05);
          std::vector<double> noise(static_cast<size_t>(spw));
          double acc = 0.0;
          for (auto& e : noise) {
            e = rng.uniform(-0.12, 0.12);
            acc += e;
          }
          const double shift = acc / spw;
          for (int t = 0; t < spw; ++t)
            ch[static_cast<size_t>(base_idx + t)] = target + noise[static_cast<size_t>(t)] - shift;
        } else if (plan.has_max && plan.has_min) {
          for (int t = 0; t < spw; ++t)
            ch[static_cast<size_t>(base_idx + t)] = rng.uniform(0.48, 0.52);
        } else if (plan.has_max) {
          for (int t = 0; t < spw; ++t)
            ch[static_cast<size_t>(base_idx + t)] = rng.uniform(0.05, 0.5);
        } else if (plan.has_min) {
          for (int t = 0; t < spw; ++t)
            ch[static_cast<size_t>(base_idx + t)] = rng.uniform(0.5, 0.95);
        } else {
          const double offset = rng.uniform(-0.15, 0.15);
          for (int t = 0; t < spw; ++t)
            ch[static_cast<size_t>(base_idx + t)] = rng.uniform(0.2, 0.8) + offset;
        }

        if (plan.has_max) {
          const double peak = detail::class_target(FeatureKind::max, cls, spec.num_classes) +
                              rng.uniform(-0.04, 0.04);
          ch[static_cast<size_t>(base_idx + rng.uniform_int(spw))] = peak;
        }
        if (plan.has_min) {
          const double valley = detail::class_target(FeatureKind::min, cls, spec.num_classes) +
                                rng.uniform(-0.04, 0.04);
          int idx = rng.uniform_int(spw);
          if (plan.has_max) {
            // Keep the peak sample intact; both marks fit since spw >= 2.
            double peak_val = 0.0;
            int peak_idx = -1;
            for (int t = 0; t < spw; ++t) {
              const double v = ch[static_cast<size_t>(base_idx + t)];
              if (peak_idx < 0 || v > peak_val) {
                peak_val = v;
                peak_idx = t;
              }
            }
            while (idx == peak_idx) idx = rng.uniform_int(spw);
          }
          ch[static_cast<size_t>(base_idx + idx)] = valley;
        }
      }
    }

    // Tail samples beyond the window grid; dropped by make_windows.
    const int last_cls = sub.labels[static_cast<size_t>(n_windows * spw - 1)];
    for (int t = n_windows * spw; t < total; ++t) {
      sub.labels[static_cast<size_t>(t)] = last_cls;
      for (int c = 0; c < spec.num_channels; ++c)
        sub.channels[static_cast<size_t>(c)][static_cast<size_t>(t)] = rng.uniform(0.2, 0.8);
    }
    ds.subjects.push_back(std::move(sub));
  }

  ds.validate();
  return ds;
}

}  // namespace flexml::signal
