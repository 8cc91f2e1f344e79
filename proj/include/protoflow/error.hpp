#pragma once

#include <stdexcept>
#include <string>

namespace protoflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or rank mismatch between tensor operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Domain violations and non-finite values (log of non-positive, zero norms,
// NaN surfacing mid-computation, non-deterministic re-evaluation).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, bad version, bad header).
class FormatError : public Error {
 public:
  using Error::Error;
};

// OS-level read/write failures, truncated streams.
class IoError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration (unknown keys, out-of-range values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Episode sampling impossible (not enough classes or samples).
class SamplingError : public Error {
 public:
  using Error::Error;
};

// ODE integration failures (divergence, bad time grid).
class IntegrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace protoflow
