// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace reentry {

/// Failure categories. The CLI maps them onto exit codes.
enum class ErrorKind {
  Input,       // malformed or missing input data
  Numerical,   // non-finite values, no convergence, degenerate geometry
  Config,      // invalid configuration or hyperparameters
};

/// Base exception. `code` is a stable identifier such as "MissingField".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail),
        kind_(kind),
        code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

/// Error that names the offending field (MissingField, MalformedNumber).
class FieldError : public Error {
 public:
  FieldError(std::string code, std::string field)
      : Error(ErrorKind::Input, std::move(code), field), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

inline Error input_error(std::string code, const std::string& detail) {
  return Error(ErrorKind::Input, std::move(code), detail);
}

inline Error numerical_error(std::string code, const std::string& detail) {
  return Error(ErrorKind::Numerical, std::move(code), detail);
}

inline Error config_error(std::string code, const std::string& detail) {
  return Error(ErrorKind::Config, std::move(code), detail);
}

}  // namespace reentry
