#pragma once

#include <stdexcept>
#include <string>

namespace symx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (JSON, CSV) or unexpected schema.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Artifact written by an incompatible version.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Embedding service could not be reached or answered out of contract.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Numerical procedure cannot proceed (too few samples, singular system).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace symx
