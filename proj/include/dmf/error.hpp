#pragma once

#include <stdexcept>
#include <string>

namespace dmf {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not conform for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or parameter value (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced, solver divergence or non-convergence (CLI exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

// backward() called on a tape that has already been swept.
class StaleTapeError : public Error {
 public:
  using Error::Error;
};

// Input outside the domain of an analytic benchmark.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents; message carries the location.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmf
