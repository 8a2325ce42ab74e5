// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace smc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation precondition (bad shapes, out-of-range ids).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes are incompatible for the requested op.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A user supplied parameter is outside its valid range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A file on disk is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input is geometrically degenerate (coplanar points, empty complexes).
class GeometryError : public Error {
 public:
  using Error::Error;
};

}  // namespace smc
