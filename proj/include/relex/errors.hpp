#pragma once

#include <stdexcept>
#include <string>

namespace relex {

// Base class for all library errors. Commands catch this at the top level
// and turn it into a nonzero exit code with a stderr diagnostic.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Matrix dimension mismatch in a numeric operation.
struct ShapeError : Error {
  using Error::Error;
};

// A documented precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Malformed input data; message carries the line number where applicable.
struct ParseError : Error {
  using Error::Error;
};

// Input refers to a relation unknown to the active schema.
struct SchemaError : Error {
  using Error::Error;
};

// File could not be read/written, or a container is truncated/corrupt.
struct IoError : Error {
  using Error::Error;
};

// Bad experiment configuration (unknown key, invalid value).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace relex
