#pragma once

#include <stdexcept>
#include <string>

namespace rtnet {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Hyper-parameters or layer settings that violate a precondition.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Zero norms, non-finite losses and gradients.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files or series.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A violated usage contract, e.g. stage-2 training with a trainable backbone.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Condition-1 batch sampling cannot be satisfied.
class SamplerError : public Error {
 public:
  using Error::Error;
};

/// Broken internal invariant (tape order, impossible states).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rtnet
