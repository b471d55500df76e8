#pragma once

#include <stdexcept>
#include <string>

namespace lcirt {

// Error hierarchy mirrors the CLI exit-code map:
//   UsageError -> 2, ParseError -> 3, NumericError -> 4.
// Non-convergence is not an exception; fits report converged=false.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct FileNotFoundError : UsageError {
  using UsageError::UsageError;
};

// Global-logit vector not strictly decreasing; callers step-halve.
struct InvalidOrderingError : NumericError {
  using NumericError::NumericError;
};

struct DegenerateDistributionError : NumericError {
  using NumericError::NumericError;
};

struct SingularJacobianError : NumericError {
  using NumericError::NumericError;
};

struct UnderflowError : NumericError {
  using NumericError::NumericError;
};

// Nested-model comparison produced a deviance below -1e-6.
struct FailedOptimizationError : NumericError {
  using NumericError::NumericError;
};

}  // namespace lcirt
