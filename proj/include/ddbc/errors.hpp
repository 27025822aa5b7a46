#pragma once

#include <stdexcept>
#include <string>

namespace ddbc {

// Error taxonomy shared across the library. Every message follows the
// "function_name(): detail" convention so failures are attributable from
// logs without a debugger.

// A matrix expected to be symmetric positive (semi)definite is not.
struct NotPsdError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not conform.
struct DimMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The stacked data matrix fails the full-row-rank excitation requirement.
struct RankDeficientError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The consistency set degenerated to a singleton (Q = 0); the requested
// operation needs a set of positive size.
struct QZeroError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A consistency-set sample was requested outside the unit-norm ball.
struct UpsilonTooLargeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An interval [lo, hi] with lo > hi was supplied.
struct BadRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Level parameter eta outside (0, 1).
struct BadEtaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Decrease-rate parameter s above its admissible upper bound -eps/eta.
struct BadSError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The SDP solver failed numerically (NaN, barrier breakdown, ...).
struct SolverFailureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A domain-type invariant failed (setpoint residual, dataset consistency...).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A trajectory left the finite-state guard during data collection.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ddbc
