#pragma once

#include <stdexcept>
#include <string>

namespace pfdm {

// Base of everything the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, out-of-range indices, bad parameters.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Two pfs or tables that are combined but live on different grids.
class GridMismatch : public Error {
 public:
  using Error::Error;
};

// Sampling from an all-zero (unobserved) row.
class Unsampleable : public Error {
 public:
  using Error::Error;
};

// A twisted row whose normalizer vanished, or a power iteration that
// collapsed to zero.
class DegenerateSupport : public Error {
 public:
  using Error::Error;
};

}  // namespace pfdm
