#pragma once

#include <stdexcept>
#include <string>

namespace outsup {

// Raised when an input object (MDP, policy, table, dataset) violates one of
// its construction invariants. The message names the offending index.
class ConstructionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an exhaustive enumeration (trajectories or policies) would
// exceed its configured cap. Enumeration never silently truncates.
class CapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition failures on otherwise well-formed objects (empty dataset,
// empty class, stochastic transitions where determinism is required, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace outsup
