#pragma once

#include <stdexcept>
#include <string>

namespace crfu {

/// Shape or width disagreement between tensors.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Caller handed us an argument outside the operation's domain.
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed serialized bytes (checkpoint, IDX, config).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// NaN/Inf surfaced in a forward/backward pass or optimizer update.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Internal API misuse (e.g. backward on a non-scalar node).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace crfu
