#pragma once

#include <stdexcept>
#include <string>

namespace nomad {

// Base class for all library errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Bad values or dimensions in caller-supplied data.
class InvalidInputError : public Error {
  public:
    using Error::Error;
};

// Too few samples to learn from.
class InsufficientDataError : public Error {
  public:
    using Error::Error;
};

// Out-of-range key position or sub-quantizer index.
class IndexError : public Error {
  public:
    using Error::Error;
};

// Malformed, mislabeled or truncated on-disk artifact.
class FormatError : public Error {
  public:
    using Error::Error;
};

// Inconsistent configuration (incompatible dimensions, unknown backend).
class ConfigError : public Error {
  public:
    using Error::Error;
};

} // namespace nomad
