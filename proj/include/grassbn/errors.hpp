#pragma once

#include <stdexcept>
#include <string>

namespace grassbn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes or lengths do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, failed factorizations and similar numerical breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file or configuration text.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input whose values are out of range (labels, config values).
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace grassbn
