#pragma once

#include <stdexcept>
#include <string>

namespace bda {

// Root of every error this library throws. `kind()` is a stable short tag used
// by the CLI when it prints a single-line machine-parsable failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// A caller broke a documented precondition (dimension mismatch, bad range).
class ContractViolation : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract"; }
};

// A value became non-finite or a numeric routine could not proceed.
class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical"; }
};

// The problem lacks something the requested method needs (Hessians, analytic
// references, compact regions, positive definiteness).
class CapabilityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "capability"; }
};

// An iterative solver hit its iteration cap before reaching tolerance.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  const char* kind() const noexcept override { return "convergence"; }
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Bad experiment configuration (unknown keys, unreadable files).
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

}  // namespace bda
