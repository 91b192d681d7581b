#pragma once

#include <stdexcept>
#include <string>

namespace kfspoof {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree with the system dimension.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Innovation covariance (or another factorized matrix) is numerically singular.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// Planning window has no feasible spoofing sequence.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Solver gave up (iteration guard tripped, pivot too small to trust).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Rejected configuration: parse failure, validation failure, or limits exceeded.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace kfspoof
