// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flexml/errors.hpp"
#include "flexml/signal.hpp"

namespace flexml::signal {

/// Column mapping for the dataset CSV. The file holds one sample per row:
/// `subject_id,<ch1>,...,<chN>,label`. Every column other than the subject
/// and label columns is a channel unless an explicit channel list is given.
struct CsvSchema {
  double sample_rate_hz = 0.0;  // not stored in the file; must be supplied
  std::string subject_column = "subject_id";
  std::string label_column = "label";
  std::vector<std::string> channels;  // empty: take all remaining columns in header order
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  size_t b = s.find_last_not_of(" \t");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, size_t row) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw DataError("parse error at data row " + std::to_string(row) + ": '" + s +
                    "' is not a number");
  return v;
}

inline int parse_label(const std::string& s, size_t row) {
  const std::string t = trim(s);
  int v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || v < 0)
    throw DataError("parse error at data row " + std::to_string(row) + ": '" + s +
                    "' is not a class index");
  return v;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  if (schema.sample_rate_hz <= 0.0)
    throw ConfigError("csv schema: sample_rate_hz must be positive");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "': empty file");
  const auto header = detail::split_csv_line(line);

  auto column_of = [&](const std::string& name) -> int {
    for (size_t i = 0; i < header.size(); ++i)
      if (detail::trim(header[i]) == name) return static_cast<int>(i);
    return -1;
  };

  const int subj_col = column_of(schema.subject_column);
  if (subj_col < 0)
    throw DataError("schema error: missing column '" + schema.subject_column + "'");
  const int label_col = column_of(schema.label_column);
  if (label_col < 0) throw DataError("schema error: missing column '" + schema.label_column + "'");

  Dataset ds;
  ds.sample_rate_hz = schema.sample_rate_hz;
  std::vector<int> channel_cols;
  if (schema.channels.empty()) {
    for (size_t i = 0; i < header.size(); ++i) {
      if (static_cast<int>(i) == subj_col || static_cast<int>(i) == label_col) continue;
      ds.channel_names.push_back(detail::trim(header[i]));
      channel_cols.push_back(static_cast<int>(i));
    }
  } else {
    for (const auto& name : schema.channels) {
      const int col = column_of(name);
      if (col < 0) throw DataError("schema error: missing column '" + name + "'");
      ds.channel_names.push_back(name);
      channel_cols.push_back(col);
    }
  }
  if (ds.channel_names.empty()) throw DataError("schema error: no channel columns");

  size_t row = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("format error at data row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " columns, got " +
                      std::to_string(cells.size()));
    const std::string sid = detail::trim(cells[static_cast<size_t>(subj_col)]);
    Subject* sub = nullptr;
    for (auto& s : ds.subjects)
      if (s.id == sid) sub = &s;
    if (sub == nullptr) {
      ds.subjects.push_back({});
      sub = &ds.subjects.back();
      sub->id = sid;
      sub->channels.resize(ds.channel_names.size());
    }
    for (size_t c = 0; c < channel_cols.size(); ++c)
      sub->channels[c].push_back(
          detail::parse_double(cells[static_cast<size_t>(channel_cols[c])], row));
    const int label = detail::parse_label(cells[static_cast<size_t>(label_col)], row);
    sub->labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (ds.subjects.empty()) throw DataError("'" + path + "': no data rows");
  ds.num_classes = max_label + 1;
  ds.validate();
  return ds;
}

/// Inverse of load_csv. Values are printed with enough digits to round-trip.
inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "subject_id";
  for (const auto& c : ds.channel_names) out << "," << c;
  out << ",label\n";
  char buf[40];
  for (const auto& sub : ds.subjects) {
    for (size_t t = 0; t < sub.labels.size(); ++t) {
      out << sub.id;
      for (size_t c = 0; c < sub.channels.size(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", sub.channels[c][t]);
        out << "," << buf;
      }
      out << "," << sub.labels[t] << "\n";
    }
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace flexml::signal
