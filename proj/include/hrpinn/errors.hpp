#pragma once

#include <stdexcept>
#include <string>

namespace hrpinn {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch, malformed arguments, length mismatch.
struct StructuralError : Error {
  using Error::Error;
};

// A computation produced a non-finite value. Carries the offending
// tape node or integration step when known (-1 otherwise).
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& msg, long where = -1)
      : Error(msg), location(where) {}
  long location;
};

// Operation invoked in the wrong order (e.g. backward before forward).
struct StateError : Error {
  using Error::Error;
};

// Evaluation outside the mathematical domain of a function; message
// names the variable that left its domain.
struct DomainError : Error {
  using Error::Error;
};

// Dynamics evaluated at a singular configuration.
struct SingularityError : Error {
  using Error::Error;
};

// Constraint Jacobian lost full row rank (LICQ violated).
struct ConstraintQualificationError : Error {
  using Error::Error;
};

// Bordered KKT matrix singular (second-order non-degeneracy violated).
struct NondegeneracyError : Error {
  using Error::Error;
};

// Iterative solver exhausted its iteration budget.
struct NonConvergenceError : Error {
  NonConvergenceError(const std::string& msg, double residual)
      : Error(msg), final_residual(residual) {}
  double final_residual;
};

// Invalid experiment configuration; message enumerates every fault.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace hrpinn
