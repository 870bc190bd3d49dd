#pragma once

#include <stdexcept>
#include <string>

namespace stiffprint {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An index or size outside the valid range of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A width w with w + gamma <= 0, for which 1/(w + gamma) is undefined.
class SingularWidthError : public Error {
 public:
  using Error::Error;
};

/// A configuration or parameter set that violates its invariants.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The planning problem has no admissible plan.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what, double margin = 0.0)
      : Error(what), margin_(margin) {}
  /// Amount by which the stiffest admissible plan misses the target compliance.
  double margin() const { return margin_; }

 private:
  double margin_;
};

/// A numerical procedure failed (ill-conditioning, divergence, iteration limit).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace stiffprint
