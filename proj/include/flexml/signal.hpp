// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "flexml/errors.hpp"
#include "flexml/matrix.hpp"
#include "flexml/rng.hpp"

namespace flexml::signal {

// ---------------------------------------------------------------------------
// Candidate features
// ---------------------------------------------------------------------------

/// The four per-channel window statistics the analog frontend can compute.
enum class FeatureKind : int { min = 0, max = 1, mean = 2, sum = 3 };

inline const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::min: return "min";
    case FeatureKind::max: return "max";
    case FeatureKind::mean: return "mean";
    case FeatureKind::sum: return "sum";
  }
  return "?";
}

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "min") return FeatureKind::min;
  if (s == "max") return FeatureKind::max;
  if (s == "mean") return FeatureKind::mean;
  if (s == "sum") return FeatureKind::sum;
  throw ConfigError("unknown feature kind '" + s + "' (expected min|max|mean|sum)");
}

struct FeatureId {
  int channel = 0;
  FeatureKind kind = FeatureKind::min;
  bool operator==(const FeatureId&) const = default;
};

inline std::string to_string(const FeatureId& f) {
  return "ch" + std::to_string(f.channel) + ":" + to_string(f.kind);
}

/// Canonical candidate order: channel-major, kinds in enum order. The index
/// of an entry in this list is the gate index used everywhere downstream.
inline std::vector<FeatureId> candidate_features(int num_channels) {
  std::vector<FeatureId> out;
  out.reserve(static_cast<size_t>(num_channels) * 4);
  for (int c = 0; c < num_channels; ++c) {
    for (int k = 0; k < 4; ++k) out.push_back({c, static_cast<FeatureKind>(k)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct Subject {
  std::string id;
  std::vector<std::vector<double>> channels;  // [channel][sample], equal lengths
  std::vector<int> labels;                    // one class index per sample
};

struct Dataset {
  std::vector<std::string> channel_names;
  double sample_rate_hz = 0.0;
  int num_classes = 0;
  std::vector<Subject> subjects;

  int num_channels() const { return static_cast<int>(channel_names.size()); }

  void validate() const {
    if (sample_rate_hz <= 0.0) throw DataError("sample_rate_hz must be positive");
    if (num_classes < 2) throw DataError("dataset needs at least 2 classes");
    for (const auto& s : subjects) {
      if (s.channels.size() != channel_names.size())
        throw DataError("subject '" + s.id + "' channel count mismatch");
      const size_t n = s.labels.size();
      for (const auto& ch : s.channels) {
        if (ch.size() != n)
          throw DataError("subject '" + s.id + "' has ragged channel lengths");
      }
      for (int l : s.labels) {
        if (l < 0 || l >= num_classes)
          throw DataError("subject '" + s.id + "' has label out of range");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

struct Window {
  int subject = 0;  // index into Dataset::subjects
  Matrix samples;   // num_channels x samples_per_window
  int label = 0;
  double t_step_s = 0.0;
};

struct WindowSet {
  int num_channels = 0;
  int num_classes = 0;
  int samples_per_window = 0;
  double t_step_s = 0.0;
  std::vector<Window> windows;

  bool empty() const { return windows.empty(); }
  double window_s() const { return samples_per_window * t_step_s; }
};

/// Segments every subject into non-overlapping fixed-duration windows.
/// Trailing samples that do not fill a whole window are dropped. A window's
/// label is the majority vote over its sample labels, ties going to the
/// lowest class index.
inline WindowSet make_windows(const Dataset& ds, double window_s) {
  if (window_s <= 0.0) throw UsageError("window_s must be positive");
  const int spw = static_cast<int>(std::llround(window_s * ds.sample_rate_hz));
  if (spw < 1) throw UsageError("window shorter than one sample");

  WindowSet out;
  out.num_channels = ds.num_channels();
  out.num_classes = ds.num_classes;
  out.samples_per_window = spw;
  out.t_step_s = ds.sample_rate_hz > 0.0 ? 1.0 / ds.sample_rate_hz : 0.0;

  for (size_t si = 0; si < ds.subjects.size(); ++si) {
    const Subject& sub = ds.subjects[si];
    const int total = sub.labels.empty() ? 0 : static_cast<int>(sub.labels.size());
    const int n_windows = total / spw;
    for (int w = 0; w < n_windows; ++w) {
      Window win;
      win.subject = static_cast<int>(si);
      win.t_step_s = out.t_step_s;
      win.samples = Matrix(out.num_channels, spw);
      std::vector<int> votes(static_cast<size_t>(ds.num_classes), 0);
      for (int t = 0; t < spw; ++t) {
        const int idx = w * spw + t;
        for (int c = 0; c < out.num_channels; ++c)
          win.samples(c, t) = sub.channels[static_cast<size_t>(c)][static_cast<size_t>(idx)];
        ++votes[static_cast<size_t>(sub.labels[static_cast<size_t>(idx)])];
      }
      int best = 0;
      for (int k = 1; k < ds.num_classes; ++k)
        if (votes[static_cast<size_t>(k)] > votes[static_cast<size_t>(best)]) best = k;
      win.label = best;
      out.windows.push_back(std::move(win));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Per-channel affine map to [0,1], fitted on training windows only.
/// A channel with zero spread maps everything to 0.5.
struct Normalizer {
  std::vector<double> lo, hi;

  double apply_value(int channel, double x) const {
    const double a = lo[static_cast<size_t>(channel)];
    const double b = hi[static_cast<size_t>(channel)];
    if (!(b > a)) return 0.5;
    return std::clamp((x - a) / (b - a), 0.0, 1.0);
  }
};

inline Normalizer fit_normalizer(const WindowSet& train) {
  if (train.empty()) throw UsageError("fit_normalizer: empty training window set");
  Normalizer n;
  n.lo.assign(static_cast<size_t>(train.num_channels), std::numeric_limits<double>::infinity());
  n.hi.assign(static_cast<size_t>(train.num_channels), -std::numeric_limits<double>::infinity());
  for (const Window& w : train.windows) {
    for (int c = 0; c < train.num_channels; ++c) {
      for (int t = 0; t < train.samples_per_window; ++t) {
        const double x = w.samples(c, t);
        n.lo[static_cast<size_t>(c)] = std::min(n.lo[static_cast<size_t>(c)], x);
        n.hi[static_cast<size_t>(c)] = std::max(n.hi[static_cast<size_t>(c)], x);
      }
    }
  }
  return n;
}

inline Window apply_normalizer(const Normalizer& n, const Window& w) {
  Window out = w;
  for (int c = 0; c < w.samples.rows; ++c)
    for (int t = 0; t < w.samples.cols; ++t) out.samples(c, t) = n.apply_value(c, w.samples(c, t));
  return out;
}

inline WindowSet apply_normalizer(const Normalizer& n, const WindowSet& ws) {
  WindowSet out = ws;
  for (auto& w : out.windows) w = apply_normalizer(n, w);
  return out;
}

// ---------------------------------------------------------------------------
// Reference features
// ---------------------------------------------------------------------------

struct FeatureEntry {
  FeatureId id;
  double value = 0.0;
};

/// Ordered (channel, kind, value) triples; entry order is the gate order.
using FeatureVector = std::vector<FeatureEntry>;

inline double window_statistic(const Window& w, int channel, FeatureKind kind) {
  const int n = w.samples.cols;
  if (n == 0) throw UsageError("window_statistic: empty window");
  double mn = w.samples(channel, 0), mx = mn, acc = 0.0;
  for (int t = 0; t < n; ++t) {
    const double x = w.samples(channel, t);
    mn = std::min(mn, x);
    mx = std::max(mx, x);
    acc += x;
  }
  switch (kind) {
    case FeatureKind::min: return mn;
    case FeatureKind::max: return mx;
    case FeatureKind::mean: return acc / n;
    case FeatureKind::sum: return acc;
  }
  return 0.0;
}

/// Ideal software-computed statistics of a (normalized) window, in canonical
/// candidate order restricted to `kinds`.
inline FeatureVector reference_features(const Window& w,
                                        const std::vector<FeatureKind>& kinds = {
                                            FeatureKind::min, FeatureKind::max,
                                            FeatureKind::mean, FeatureKind::sum}) {
  if (w.samples.cols == 0) throw UsageError("reference_features: empty window");
  FeatureVector out;
  out.reserve(static_cast<size_t>(w.samples.rows) * kinds.size());
  for (int c = 0; c < w.samples.rows; ++c) {
    for (int k = 0; k < 4; ++k) {
      const auto kind = static_cast<FeatureKind>(k);
      if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) continue;
      out.push_back({{c, kind}, window_statistic(w, c, kind)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subject-level k-fold splitting
// ---------------------------------------------------------------------------

struct Fold {
  std::vector<int> train_subjects;
  std::vector<int> test_subjects;
};

struct FoldPlan {
  int k = 0;
  std::vector<Fold> folds;
};

/// Shuffles subjects with the seed and partitions them into k near-equal
/// test groups. Test sets are disjoint and cover every subject, so no
/// subject ever appears on both sides of a fold.
inline FoldPlan kfold_split(const Dataset& ds, int k, uint64_t seed) {
  const int n = static_cast<int>(ds.subjects.size());
  if (k < 2) throw ConfigError("kfold_split: k must be >= 2");
  if (k > n) throw ConfigError("kfold_split: k exceeds subject count");

  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(Rng::derive(seed, 0x6b666f6cull));  // stream tag for fold shuffling
  rng.shuffle(order);

  FoldPlan plan;
  plan.k = k;
  plan.folds.resize(static_cast<size_t>(k));
  const int base = n / k, extra = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    const int sz = base + (f < extra ? 1 : 0);
    auto& fold = plan.folds[static_cast<size_t>(f)];
    fold.test_subjects.assign(order.begin() + pos, order.begin() + pos + sz);
    pos += sz;
  }
  for (int f = 0; f < k; ++f) {
    auto& fold = plan.folds[static_cast<size_t>(f)];
    for (int i = 0; i < n; ++i) {
      const int s = order[static_cast<size_t>(i)];
      if (std::find(fold.test_subjects.begin(), fold.test_subjects.end(), s) ==
          fold.test_subjects.end())
        fold.train_subjects.push_back(s);
    }
  }
  return plan;
}

/// Windows restricted to a subject subset, preserving order.
inline WindowSet select_subjects(const WindowSet& ws, const std::vector<int>& subjects) {
  WindowSet out = ws;
  out.windows.clear();
  for (const Window& w : ws.windows)
    if (std::find(subjects.begin(), subjects.end(), w.subject) != subjects.end())
      out.windows.push_back(w);
  return out;
}

}  // namespace flexml::signal
