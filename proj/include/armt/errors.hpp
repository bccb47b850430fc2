#pragma once

#include <stdexcept>
#include <string>

namespace armt {

/// Invalid shapes, arguments or configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or other numerical failures during a forward/backward pass.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace armt
