#pragma once

#include <stdexcept>
#include <string>

namespace scoretune {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (shape, range, count).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// The requested overlap target cannot be reached by any gamma > 1.
class InfeasibleTarget : public Error {
 public:
  using Error::Error;
};

/// epsilon >= sigma_L^2: the Langevin recursion no longer contracts.
class DivergentRegime : public Error {
 public:
  using Error::Error;
};

/// A Gaussian with zero total variance was requested.
class DegenerateDistribution : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (wrong size, bad header, missing file).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A sampling chain or a training run produced non-finite or exploding values.
class Diverged : public Error {
 public:
  using Error::Error;
};

}  // namespace scoretune
