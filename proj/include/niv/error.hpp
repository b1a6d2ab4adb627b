#pragma once

#include <stdexcept>
#include <string>

namespace niv {

// Bad input: malformed files, invalid configuration, mismatched arities.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf produced by an estimator, gradient or training step.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace niv
