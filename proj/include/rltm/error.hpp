#pragma once

#include <stdexcept>
#include <string>

namespace rltm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or invalid option values. CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or inconsistent input data. CLI exit code 3.
struct DataError : Error {
  using Error::Error;
};

// Non-finite values, failed numeric postconditions. CLI exit code 4.
struct NumericError : Error {
  using Error::Error;
};

// Shape mismatches between tensors or sequences. CLI exit code 4.
struct DimensionError : Error {
  using Error::Error;
};

}  // namespace rltm
