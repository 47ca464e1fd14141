#pragma once

#include <stdexcept>
#include <string>

namespace finexl {

/// Invalid input or configuration. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ZeroNormError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// File system or transport failure. The CLI maps this to exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace finexl
