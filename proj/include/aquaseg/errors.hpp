#pragma once

#include <stdexcept>
#include <string>

namespace aquaseg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or stream shapes that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or out-of-range configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation precondition (non-scalar loss, non-binary target, NaN gradient).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (cannot open, cannot write).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text payloads. `kind()` distinguishes the failure.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, truncated, shape_mismatch, unsupported_dtype, bad_version, malformed };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace aquaseg
