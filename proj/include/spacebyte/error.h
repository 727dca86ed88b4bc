#pragma once

#include <stdexcept>
#include <string>

namespace spacebyte {

// Base class for every error raised by the library. The CLI maps the
// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid model, training, or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, missing, or reserved-byte-containing input data or files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied values outside an operation's domain (token >= V, prompt
// longer than the context, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace spacebyte
