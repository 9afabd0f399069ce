// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gm {

/// Root of the library's exception hierarchy. The CLI maps each family to an
/// exit code: usage 1, data/format 2, numerical 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Operand dimensions do not fit the operator.
class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Hypersphere projection of a (near) zero vector.
class DegenerateInputError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// log map of antipodal points on the hypersphere.
class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Adaptive solver exceeded its step budget.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, double t_reached)
      : NumericalError(what), t_reached_(t_reached) {}
  double t_reached() const { return t_reached_; }

 private:
  double t_reached_;
};

/// Non-finite loss or gradient during optimisation.
class TrainingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace gm
