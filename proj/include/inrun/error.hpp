#pragma once

#include <stdexcept>
#include <string>

namespace inrun {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or layouts that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed by an exported operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Statistics on a constant sequence, empty subsets where one is required, etc.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace inrun
