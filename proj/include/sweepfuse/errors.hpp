#pragma once

#include <stdexcept>
#include <string>

namespace sweepfuse {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidCamera : public Error {
 public:
  using Error::Error;
};

class ChannelMismatch : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class WeightGraphMismatch : public Error {
 public:
  using Error::Error;
};

class StreamLengthMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyValidSet : public Error {
 public:
  using Error::Error;
};

class EmptyCloud : public Error {
 public:
  using Error::Error;
};

// Nearest-neighbour query against an empty point set.
class EmptyReference : public EmptyCloud {
 public:
  using EmptyCloud::EmptyCloud;
};

class NoIntersection : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BigEndianUnsupported : public Error {
 public:
  using Error::Error;
};

/// Malformed text or binary input. `line()` is 1-based, or 0 when the
/// failure is not tied to a line (binary payloads).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line), detail_(what) {}

  int line() const noexcept { return line_; }
  // Message without the line prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  int line_;
  std::string detail_;
};

}  // namespace sweepfuse
