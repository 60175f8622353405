#pragma once

#include <stdexcept>
#include <string>

namespace lqmfg {

// Base class for everything this library throws deliberately.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A matrix argument that must be symmetric is not, beyond tolerance.
class NonSymmetricError : public Error {
 public:
  using Error::Error;
};

// A matrix argument that must be symmetric positive definite is not.
class NotSpdError : public Error {
 public:
  using Error::Error;
};

// A drift matrix that must be stable has an eigenvalue with real part >= 0.
class UnstableError : public Error {
 public:
  using Error::Error;
};

// Shapes of the inputs do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A linear-algebra step lost too much precision to be trusted.
class IllConditionedError : public Error {
 public:
  using Error::Error;
};

// Solvability conditions for the equilibrium system fail; the message
// names the failing clause.
class ConditionsFailError : public Error {
 public:
  using Error::Error;
};

// An N-person game does not reduce to the nearly identical form.
class NotNearlyIdenticalError : public Error {
 public:
  using Error::Error;
};

// Game data does not carry the structure a transformation requires.
class StructureMismatchError : public Error {
 public:
  using Error::Error;
};

// A drift matrix is numerically defective (no reliable eigenbasis).
class DefectiveError : public Error {
 public:
  using Error::Error;
};

// A simulated trajectory left the configured bounding box or went NaN.
class BlowupError : public Error {
 public:
  using Error::Error;
};

// Malformed input file or schema violation.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace lqmfg
