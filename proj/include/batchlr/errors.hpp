#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace batchlr {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A step index or sample index outside its valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// An object used before it was fully constructed.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A malformed argument (bad family parameter, empty epoch list, b < 1, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// The learning rates of a plan sum to zero.
class DegeneratePlanError : public Error {
 public:
  using Error::Error;
};

/// No closed-form bound exists for this schedule combination.
class UnsupportedScheduleError : public Error {
 public:
  using Error::Error;
};

/// A hypothesis of a bound is violated (gamma^2 >= delta, L*eta_max >= 2, ...).
class ConstraintError : public Error {
 public:
  using Error::Error;
};

/// Non-finite input or output.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Exhaustive enumeration would exceed the configured budget.
class FeasibilityError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration document.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// SGD iterate left the finite region. Carries the last step whose iterate was finite.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, std::size_t last_finite_step)
      : Error(what), last_finite_step_(last_finite_step) {}

  std::size_t last_finite_step() const noexcept { return last_finite_step_; }

 private:
  std::size_t last_finite_step_;
};

}  // namespace batchlr
