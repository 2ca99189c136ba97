#pragma once

#include <stdexcept>
#include <string>

namespace rp2 {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up; the message names the axis.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed, or an optimizer diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied values outside their documented domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated files (weights, PNG, annotations, archives).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rp2
