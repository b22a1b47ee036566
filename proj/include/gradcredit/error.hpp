#pragma once

#include <stdexcept>
#include <string>

namespace gradcredit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes, invalid configuration values, unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed user-supplied data (token ids, sequences, files).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Judge verdict text that does not follow the JSON verdict protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Rubric set whose positive-weight normalizer vanishes.
class DegenerateRubricError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, corrupted or version-mismatched checkpoint.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace gradcredit
