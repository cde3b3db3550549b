#pragma once

#include <stdexcept>
#include <string>

namespace polymerlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A requested lattice window does not fit in addressable memory.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// A computation needs disorder at a space-time site the field does not store.
class WindowError : public Error {
 public:
  using Error::Error;
};

/// Conditioning on an endpoint the walk cannot reach.
class UnreachableEndpoint : public Error {
 public:
  using Error::Error;
};

/// Partition function left the representable range even after rescaling.
class NumericRangeError : public Error {
 public:
  using Error::Error;
};

/// Malformed field file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Refusal to run an experiment whose theorem hypotheses fail.
class HypothesisError : public Error {
 public:
  using Error::Error;
};

/// Input too small for a reliable estimate (e.g. a tail fit with too few points).
class DiagnosticError : public Error {
 public:
  using Error::Error;
};

}  // namespace polymerlab
