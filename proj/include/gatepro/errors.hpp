#pragma once

#include <stdexcept>
#include <string>

namespace gatepro {

/// Thrown when an operation's preconditions are violated.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failure, reported with path context (CLI exit code 3).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN detected in loss or parameters during training (CLI exit code 4).
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, long step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"),
        step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace gatepro
