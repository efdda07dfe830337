#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nits {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the support of a density or cdf.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed parameters: wrong shape, non-finite entries, bad spec.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced during evaluation.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::ptrdiff_t layer = -1)
      : Error(what), layer_(layer) {}
  /// Zero-based layer index, or -1 when not attributable to a layer.
  std::ptrdiff_t layer() const noexcept { return layer_; }

 private:
  std::ptrdiff_t layer_;
};

/// Bisection ran out of iterations before the bracket closed.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double lo, double hi)
      : Error(what), lo_(lo), hi_(hi) {}
  double bracket_lo() const noexcept { return lo_; }
  double bracket_hi() const noexcept { return hi_; }

 private:
  double lo_;
  double hi_;
};

/// Caller misuse: bad flags, empty input, mismatched tapes.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or file integrity failure.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input data problem with a 1-based location (0 when not applicable).
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : Error(what), line_(line), column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace nits
