#pragma once

#include <stdexcept>
#include <string>

namespace docmap {

// Base for every error raised by the library. Callers that only care about
// "bad input" can catch this; the subclasses let the service map failures to
// HTTP status codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(const std::string& what, long expected, long actual)
      : Error(what + ": expected dim " + std::to_string(expected) + ", got " +
              std::to_string(actual)) {}
  explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

}  // namespace docmap
