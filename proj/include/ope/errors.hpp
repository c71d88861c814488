#pragma once

#include <stdexcept>
#include <string>

namespace ope {

/// Base class for all errors thrown by this library.
struct OpeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller violated an argument contract (sizes, ranges, missing data).
struct InvalidInput : OpeError {
  using OpeError::OpeError;
};

/// The data admits no meaningful answer (e.g. all points identical).
struct DegenerateData : OpeError {
  using OpeError::OpeError;
};

/// A matrix required to be positive semi-definite is not.
struct NotPsd : OpeError {
  using OpeError::OpeError;
};

/// A numeric computation produced non-finite values or failed to converge.
struct NumericalFailure : OpeError {
  using OpeError::OpeError;
};

/// A tabular bridge system has no solution at the reported cell.
struct NoBridgeSolution : OpeError {
  NoBridgeSolution(const std::string& msg, int t_, int s_, int a_)
      : OpeError(msg), t(t_), s(s_), a(a_) {}
  int t;
  int s;
  int a;
};

/// Filesystem or serialization failure.
struct IoError : OpeError {
  using OpeError::OpeError;
};

}  // namespace ope
