#pragma once

#include <stdexcept>
#include <string>

namespace exactrag {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInput,          // malformed files, unknown ids, invalid arguments
  kStateMismatch,  // index built for a different graph/configuration
  kProvider,       // remote embedding or generation service failure
  kCapacity,       // a combinatorial cap was exceeded
  kNumeric,        // divergence or non-finite values
  kConfig,         // inconsistent configuration
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& message) : Error(ErrorKind::kInput, message) {}
};

class StateMismatchError : public Error {
 public:
  explicit StateMismatchError(const std::string& message)
      : Error(ErrorKind::kStateMismatch, message) {}
};

class ProviderError : public Error {
 public:
  ProviderError(const std::string& message, bool retryable)
      : Error(ErrorKind::kProvider, message), retryable_(retryable) {}

  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& message) : Error(ErrorKind::kCapacity, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error(ErrorKind::kNumeric, message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error(ErrorKind::kConfig, message) {}
};

/// Raised when an LLM (or the structured bypass) returns text that is not a
/// query graph. Keeps the raw response for diagnostics.
class ExtractionError : public Error {
 public:
  ExtractionError(const std::string& message, std::string raw)
      : Error(ErrorKind::kInput, message), raw_(std::move(raw)) {}

  const std::string& raw_response() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// Process exit code for a failure class: 2 input/config, 3 state mismatch,
/// 4 provider, 1 otherwise.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput:
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kStateMismatch:
      return 3;
    case ErrorKind::kProvider:
      return 4;
    default:
      return 1;
  }
}

}  // namespace exactrag
