#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace loadshed {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed case, dataset or model file. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A domain invariant does not hold (e.g. g_min > g_max, dangling bus id).
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Argument sizes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Operation does not apply to this input (e.g. network matrices of a copper-plate case).
class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

/// A linear system could not be factored to the required pivot tolerance.
class SingularSystemError : public Error {
 public:
  SingularSystemError(const std::string& what, double condition_estimate)
      : Error(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

}  // namespace loadshed
