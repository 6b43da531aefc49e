#pragma once

#include <stdexcept>
#include <string>

namespace rfl {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidBoxError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (ground truth lines, checkpoints, configs).
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values in a state, a loss or a gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace rfl
