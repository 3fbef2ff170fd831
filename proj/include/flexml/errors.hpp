// Copyright 2026 The flexml Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace flexml {

// Categories map 1:1 to CLI exit codes.
enum class ErrorCategory : int { config = 2, data = 3, io = 4, numeric = 5 };

class Error : public std::runtime_error {
public:
  Error(ErrorCategory cat, const std::string& msg) : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const noexcept { return cat_; }

private:
  ErrorCategory cat_;
};

/// Bad configuration value or inconsistent option combination.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& m) : Error(ErrorCategory::config, m) {}
};

/// Malformed input data (schema, format, parse failures).
class DataError : public Error {
public:
  explicit DataError(const std::string& m) : Error(ErrorCategory::data, m) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& m) : Error(ErrorCategory::io, m) {}
};

/// Undefined numeric operation (e.g. normalization by zero energy).
class NumericError : public Error {
public:
  explicit NumericError(const std::string& m) : Error(ErrorCategory::numeric, m) {}
};

/// API precondition violated by calling code.
class UsageError : public Error {
public:
  explicit UsageError(const std::string& m) : Error(ErrorCategory::config, m) {}
};

}  // namespace flexml
