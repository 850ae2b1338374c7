#pragma once

#include <stdexcept>
#include <string>

namespace restad {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or broadcast incompatibility between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid model/train/run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed CSV, JSON, or checkpoint input.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// RBF initialization could not produce a usable layer.
class InitError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given labels (e.g. single class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace restad
