#pragma once

#include <stdexcept>
#include <string>

namespace corrbalance {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A class label outside [0, num_classes).
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed runtime input (datasets, boxes, indices).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Graph state token does not match the caller's snapshot.
class StalenessError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward without a populated forward cache.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace corrbalance
