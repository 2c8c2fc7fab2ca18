#pragma once

#include <stdexcept>
#include <string>

namespace disco {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or length disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A label row that is not one-hot, or a label id out of range.
class LabelError : public Error {
 public:
  using Error::Error;
};

// An input that violates an operation's documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Inputs for which the quantity is undefined (all-zero histogram, empty batch).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() on a non-scalar or a replayed tape.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A non-finite value produced by a forward operation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or unreadable data files.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace disco
