#pragma once

#include <stdexcept>
#include <string>

namespace iclcheck {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (empty input, length mismatch, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A query fell outside the declared query domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (bad alpha, wrong discrepancy for an estimator, ...).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A linear system or kernel matrix could not be factorized.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// A log probability or other numeric quantity was NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Network-level failure talking to a remote model.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A remote response did not match the wire schema.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& field, const std::string& message)
      : Error("protocol error at '" + field + "': " + message), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A remote model returned well-formed but unusable data (e.g. a non-finite logprob).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing experiment files failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace iclcheck
