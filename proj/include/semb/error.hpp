#pragma once

#include <stdexcept>
#include <string>

namespace semb {

// Input or contract violation (bad file, bad dimensions, violated precondition).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public ContractError {
 public:
  using ContractError::ContractError;
};

class TopologyError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Numerical failure: non-finite values, divergence, solver breakdown.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace semb
