#pragma once

#include <stdexcept>
#include <string>

namespace spikehar {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or geometry mismatch between tensors or layers.
struct DimensionError : Error {
  using Error::Error;
};

// Violated operation precondition (empty input, out-of-range label, ...).
struct ContractError : Error {
  using Error::Error;
};

// Invalid run configuration, unknown key, unsupported option.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed or truncated file on disk.
struct FormatError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace spikehar
