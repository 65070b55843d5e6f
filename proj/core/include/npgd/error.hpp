#pragma once

#include <stdexcept>
#include <string>

namespace npgd {

// Base class for every error raised by the library. The CLI maps
// ContractError-derived failures to exit code 2 and the rest to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an interface contract (bad shapes, bad config, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ParameterError : public ContractError {
 public:
  using ContractError::ContractError;
};

class ConfigError : public ContractError {
 public:
  using ContractError::ContractError;
};

class UnsupportedConfigError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Runtime / numeric failures.
class FormatError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class SolverError : public NumericError {
 public:
  using NumericError::NumericError;
};

class UndefinedRatioError : public NumericError {
 public:
  using NumericError::NumericError;
};

class UndefinedMetricError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace npgd
