#pragma once

#include <stdexcept>
#include <string>

namespace annihil {

/// Raised when a caller breaks a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a computation cannot be carried out to the requested accuracy.
class NumericalRefusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed or incomplete experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace annihil
