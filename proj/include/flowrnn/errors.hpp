#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowrnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Query past the end of a finite control horizon.
class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class UnsupportedShiftError : public Error {
 public:
  using Error::Error;
};

/// Integration left the state domain, exceeded the magnitude guard or the
/// step size collapsed.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Non-finite loss during training.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Network fitting could not reach the requested sup error.
class BudgetExhaustedError : public Error {
 public:
  BudgetExhaustedError(const std::string& what, double achieved, double target)
      : Error(what), achieved_(achieved), target_(target) {}
  double achieved() const noexcept { return achieved_; }
  double target() const noexcept { return target_; }

 private:
  double achieved_;
  double target_;
};

/// Malformed model or dataset file. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace flowrnn
