#pragma once

#include <stdexcept>
#include <string>

namespace tse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Length, sample-rate or dimension mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its mathematical domain (e.g. r outside [0,1]).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported WAV content.
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedChannelsError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedEncodingError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// SI-SDR reference whose energy is below the floor.
class DegenerateReferenceError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad hyperparameters, missing scene for the oracle
/// scorer, unknown config keys, and so on.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// Violated operation precondition that is not a shape or domain problem.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Failure of an external worker process. Subclasses make each failure mode
/// distinguishable by type.
class BackendError : public Error {
 public:
  using Error::Error;
};

class WorkerSpawnError : public BackendError {
 public:
  using BackendError::BackendError;
};

class WorkerProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

class WorkerTimeoutError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// The worker process terminated while a request was outstanding.
class WorkerExitError : public BackendError {
 public:
  WorkerExitError(const std::string& what, int status)
      : BackendError(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

/// The worker answered with {"ok":false,...}.
class WorkerRemoteError : public BackendError {
 public:
  using BackendError::BackendError;
};

/// Reports with incompatible layouts cannot be merged.
class MergeError : public Error {
 public:
  using Error::Error;
};

}  // namespace tse
