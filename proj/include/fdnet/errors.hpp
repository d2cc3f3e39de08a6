#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fdnet {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown config key. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation rejected its input (precondition violation). CLI exit code 2.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or serialization failure. CLI exit code 3.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File manifest is not valid JSON or is internally inconsistent.
class ManifestError : public IoError {
 public:
  using IoError::IoError;
};

/// Manifest-declared shape disagrees with the stored payload size.
class ShapeMismatchError : public IoError {
 public:
  using IoError::IoError;
};

/// Payload ends before the manifest-declared value count.
class TruncatedPayloadError : public IoError {
 public:
  using IoError::IoError;
};

/// Non-finite state encountered during a rollout or training. CLI exit code 4.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::int64_t step)
      : Error(what), step_index(step) {}

  /// Index of the step at which the first non-finite value appeared.
  std::int64_t step_index = -1;
};

/// The Hessian-vector oracle produced a non-finite vector.
class CurvatureOracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace fdnet
