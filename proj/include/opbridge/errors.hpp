#pragma once

#include <stdexcept>
#include <string>

namespace opbridge {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// bad inputs/preconditions -> 1, failed numerical routines -> 3.

// Malformed or non-finite inputs, dimension mismatches.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Arguments outside an operation's mathematical domain (r <= 0, t >= T, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A stated precondition of the operation does not hold for these inputs
// (non-commuting rescaling matrix, terminal pinning without the bridge
// property, spectrum outside the supported range).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Comparison of models with incompatible dimensions or horizons.
class InvalidComparison : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Ensemble grid too coarse near the terminal time for a diagnostic.
class InsufficientResolution : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// A numerical routine did not reach its target (quadrature tolerance,
// eigensolver convergence, indefinite covariance factor).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Spectral block-diagonalization produced a basis too ill-conditioned to use.
class DecompositionUnstable : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

}  // namespace opbridge
