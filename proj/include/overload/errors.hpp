#pragma once

#include <stdexcept>
#include <string>

namespace overload {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data: bad CSV rows, bad tensor files, shape mismatches (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// The cost-model fit has no quadratic segment to work with (exit code 4).
class FitDegenerateError : public Error {
 public:
  using Error::Error;
};

/// A benchmark run exceeded the hard safety limit.
class BenchmarkLimitError : public Error {
 public:
  using Error::Error;
};

}  // namespace overload
