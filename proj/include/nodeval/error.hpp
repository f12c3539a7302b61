#pragma once

#include <stdexcept>
#include <string>

namespace nodeval {

// Malformed input: bad files, out-of-range values, violated preconditions.
// The CLI maps this to exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A statistic that cannot be computed on otherwise valid data (single-class
// sample, zero variance, too many degenerate bootstrap draws). Exit code 2.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nodeval
