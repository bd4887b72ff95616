#pragma once

#include <stdexcept>
#include <string>

namespace uapforge {

// Base for every error the pipeline raises on purpose. The CLI maps the
// subclasses onto its exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

// Raised when the speaker model is not accurate enough for attack metrics
// to mean anything.
class GateError : public Error {
 public:
  GateError(const std::string& what, double measured)
      : Error(what), measured_(measured) {}
  double measured() const { return measured_; }

 private:
  double measured_;
};

}  // namespace uapforge
