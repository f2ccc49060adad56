#pragma once

#include <stdexcept>
#include <string>

namespace r2i {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed arguments that violate an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Input data (files, records, model output) is malformed.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A corpus root produced no usable images.
class EmptyCorpusError : public DataError {
 public:
  EmptyCorpusError(std::string message, bool had_candidates)
      : DataError(std::move(message)), had_candidates_(had_candidates) {}

  /// False when the root held no image files at all.
  bool had_candidates() const noexcept { return had_candidates_; }

 private:
  bool had_candidates_;
};

/// A model endpoint could not be reached or refused the request.
class TransportError : public Error {
 public:
  TransportError(std::string message, int status, bool retryable)
      : Error(std::move(message)), status_(status), retryable_(retryable) {}

  /// HTTP status, or 0 for connection-level failures.
  int status() const noexcept { return status_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int status_;
  bool retryable_;
};

/// The judge model answered with something that carries no verdict.
class JudgeError : public Error {
 public:
  using Error::Error;
};

/// State transition rejected (e.g. a verdict on a closed bench item).
class ConflictError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage cannot continue; durable state up to the last stage remains.
class StageError : public Error {
 public:
  using Error::Error;
};

}  // namespace r2i
