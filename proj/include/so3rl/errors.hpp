#pragma once

#include <stdexcept>
#include <string>

namespace so3rl {

/// Thrown when an argument violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an object is used in a state that does not allow the call
/// (e.g. stepping a finished episode).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised by the trainers when a loss or parameter turns non-finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace so3rl
