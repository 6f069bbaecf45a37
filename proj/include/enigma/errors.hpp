#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace enigma {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data or an invariant violation detected at construction.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad or inconsistent configuration (unknown keys, out-of-range values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Exhaustive enumeration would exceed the configured cap.
class EnumerationCapError : public Error {
 public:
  using Error::Error;
};

/// The data distribution does not cover the target distribution's support.
class CoverageError : public Error {
 public:
  CoverageError(const std::string& what, std::vector<std::string> uncovered)
      : Error(what), uncovered_pairs(std::move(uncovered)) {}
  std::vector<std::string> uncovered_pairs;
};

/// Numerical failure during estimation (divergence, degenerate normalizer).
class EstimationError : public Error {
 public:
  using Error::Error;
};

}  // namespace enigma
