#pragma once

#include <stdexcept>
#include <string>

namespace gcl {

// Error categories map one-to-one onto CLI exit codes (2, 3, 4).

/// Invalid configuration, arguments, or preconditions on call parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data (files, records, scores, shapes).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A record id that appears more than once where ids must be unique.
class DuplicateIdError : public DataError {
 public:
  using DataError::DataError;
};

/// NaN/Inf or other numerical breakdown during training or evaluation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gcl
