#pragma once

#include <stdexcept>
#include <string>

namespace hazard {

/// Broad failure category. The CLI maps each kind to a distinct exit status.
enum class ErrorKind {
  Config,   // invalid configuration or arguments
  Data,     // malformed or contract-violating input data
  Numeric,  // non-finite values during computation
  Io,       // filesystem failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// Operand shapes do not conform.
class ShapeError : public DataError {
 public:
  explicit ShapeError(const std::string& what) : DataError("shape mismatch: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace hazard
