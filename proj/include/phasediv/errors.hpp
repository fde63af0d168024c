#pragma once

#include <stdexcept>
#include <string>

namespace phasediv {

/// Invalid configuration or argument values; the CLI maps this to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An experiment stopped because more than the allowed fraction of trials failed (exit code 3).
class ExcessiveFailures : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace phasediv
