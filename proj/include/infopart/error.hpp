#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace infopart {

/// Violated precondition (bad argument, dimension mismatch, malformed input).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A state that is not finite was handed to a map.
class InvalidStateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Trajectory left the escape radius; carries the iteration index.
class EscapeError : public std::runtime_error {
 public:
  EscapeError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Floating-point breakdown during optimization (NaN loss, failed fit).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace infopart
