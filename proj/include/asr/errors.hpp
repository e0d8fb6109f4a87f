#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace asr {

/// Base for every error raised by the testbed.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or combination (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Matrix or vector dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable input data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Operation called with too few samples to be defined (e.g. variance of one row).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or trace file could not be parsed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient. Carries the step at which it happened.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), reason_(what), step_(step) {}

  std::size_t step() const noexcept { return step_; }
  /// Message without the step suffix.
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
  std::size_t step_;
};

/// Source training diverged.
class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace asr
