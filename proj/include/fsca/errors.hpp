#pragma once

#include <stdexcept>
#include <string>

namespace fsca {

/// Base of every error the library raises. `exit_code()` is the process
/// status the command-line front end maps the error to.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Shapes or extents that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or otherwise non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (domain specs, training configs, protocol setup).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied data (points outside an image, empty lists, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file. Always names the offending path.
class FormatError : public Error {
 public:
  FormatError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }
  int exit_code() const noexcept override { return 2; }

 private:
  std::string path_;
};

}  // namespace fsca
