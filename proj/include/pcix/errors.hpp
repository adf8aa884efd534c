#pragma once

#include <stdexcept>
#include <string>

namespace pcix {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input: missing columns, unparseable cells, empty selections.
struct DataError : Error {
  using Error::Error;
};

// Rank-deficient design or numerically singular system.
struct SingularError : Error {
  explicit SingularError(const std::string& what, double rcond = 0.0)
      : Error(what), reciprocal_condition(rcond) {}
  double reciprocal_condition;
};

// Iteration limit reached; carries the best iterate's residual norm.
struct ConvergenceError : Error {
  explicit ConvergenceError(const std::string& what, double resid = 0.0,
                            int iters = 0)
      : Error(what), residual(resid), iterations(iters) {}
  double residual;
  int iterations;
};

// Fits that cannot be formed at all (zero events, constant outcome, ...).
struct DegenerateError : Error {
  using Error::Error;
};

}  // namespace pcix
