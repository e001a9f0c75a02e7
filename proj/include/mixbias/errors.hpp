#pragma once

#include <stdexcept>
#include <string>

namespace mixbias {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or incomplete input data (missing column, bad CSV, bad JSON).
class InputError : public Error {
 public:
  using Error::Error;
};

// A component evaluated to NaN or infinity.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Conditioning on a zero-probability stratum.
class StratumError : public Error {
 public:
  using Error::Error;
};

// E(S_ab | Z) vanishes somewhere, so a and b are not identified.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

// E(S_ab | Z) is not single-signed or disagrees with the declared sign.
class SignError : public Error {
 public:
  using Error::Error;
};

// Rank-deficient least-squares system.
class RankError : public Error {
 public:
  using Error::Error;
};

// Loss Hessian not positive definite.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (fold counts, learner settings, scenarios).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid catalog parameter or unknown entry.
class ParameterError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixbias
