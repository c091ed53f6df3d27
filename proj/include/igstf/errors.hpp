#pragma once

#include <stdexcept>
#include <string>

namespace igstf {

// Base for every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during evaluation, optimizer aborts, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files (schema, parse failures, duplicates).
class IngestionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Out-of-vocabulary categorical values.
class EncodingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace igstf
