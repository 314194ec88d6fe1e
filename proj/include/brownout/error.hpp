#pragma once

#include <stdexcept>
#include <string>

namespace brownout {

/// Base class for every domain failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A parameter lies outside its documented range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Two inputs that must describe the same thing disagree (plan vs batch, etc.).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Queue load at or beyond capacity, so the steady state does not exist.
class SaturationError : public Error {
 public:
  using Error::Error;
};

/// Samples arrived out of time order.
class OrderingError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed config, trace or layer document.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace brownout
