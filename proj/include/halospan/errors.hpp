#pragma once

#include <stdexcept>
#include <string>

namespace halospan {

/// Base of every error raised by the library. `exit_code()` follows the CLI
/// contract: 1 for validation/configuration problems, 2 for runtime failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const { return 2; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 1; }
};

class AnnotationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class LengthMismatchError : public FormatError {
 public:
  LengthMismatchError(const std::string& what, std::size_t expected, std::size_t actual)
      : FormatError(what + ": expected " + std::to_string(expected) + " bytes, got " +
                    std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected() const { return expected_; }
  std::size_t actual() const { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when an operation needs data the input was not produced with
/// (e.g. norm mode on a dump without value norms).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double grad_norm)
      : Error(what), grad_norm_(grad_norm) {}
  double grad_norm() const { return grad_norm_; }

 private:
  double grad_norm_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

/// Internal-consistency failure, e.g. a NaN escaping feature math.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace halospan
