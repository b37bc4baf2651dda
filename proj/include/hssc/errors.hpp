#pragma once

#include <stdexcept>
#include <string>

namespace hssc {

// Shape or argument contract violated by the caller.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed file or bitstream.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BitstreamError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Non-finite values, divergence, division by zero.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hssc
