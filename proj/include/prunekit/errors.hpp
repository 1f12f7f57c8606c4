#pragma once

#include <stdexcept>
#include <string>

namespace prunekit {

// Shape or argument contract violated by a caller.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed, truncated or inconsistent file / dataset contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values produced during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace prunekit
