#pragma once

#include <stdexcept>
#include <string>

namespace posg {

// Malformed or inconsistent input data (corpus files, checkpoints, records).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Violated call contract: bad arguments, out-of-range ids, shape mismatch.
class InvalidArgument : public std::runtime_error {
 public:
  explicit InvalidArgument(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure at runtime (divergence, non-finite loss).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace posg
