#pragma once

#include <stdexcept>
#include <string>

namespace dln {

// Bad or inconsistent input data (files, manifests, dimension mismatches
// surfaced from user-supplied inputs). CLI exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure: non-finite values, factorization of an indefinite
// matrix, diverged updates. CLI exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dln
