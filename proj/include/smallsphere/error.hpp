#pragma once

#include <stdexcept>
#include <string>

namespace smallsphere {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments: dimension mismatch, parameters outside their domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A point sits on a pole of the (s, y) decomposition, so y is undefined.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Requested model/operation combination is not supported.
class UnsupportedModel : public Error {
 public:
  using Error::Error;
};

/// Iterative numerical procedure failed (bracketing, quadrature, optimizer).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace smallsphere
