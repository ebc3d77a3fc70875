#pragma once

#include <stdexcept>
#include <string>

namespace photoseq {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument value: empty lists, even blur lengths, negative noise params.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Index or frame range outside what the input provides.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Image dimensions incompatible with an operation.
class ShapeError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Degenerate regression or otherwise unidentifiable estimate.
class IllPosedError : public Error {
 public:
  using Error::Error;
};

/// Weight file or parameter set inconsistent with the network config.
class WeightError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or decoding failure.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace photoseq
