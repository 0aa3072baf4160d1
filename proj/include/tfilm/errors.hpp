#pragma once

#include <stdexcept>
#include <string>

namespace tfilm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Field lengths or indices that do not match the grid.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// A model or solver parameter outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// An operation called on an input that violates its precondition
/// (non-positive height, infinite starting energy, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A configuration that does not parse or names an unknown key.
class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

/// Output directory problems: not writable, or locked by another run.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tfilm
