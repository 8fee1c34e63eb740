#pragma once

#include <stdexcept>
#include <string>

namespace ssnet {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (bad magic, truncated header, inconsistent sizes).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that uses an encoding or layout we do not handle.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Tensor or feature shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (pool sizes, crop sizes, rates, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values detected in data, gradients or losses.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssnet
