#pragma once

#include <stdexcept>
#include <string>

namespace sdq {

// Violated precondition or malformed input (config, file format, shape
// mismatch). CLI maps this to exit code 1.
class ContractError : public std::runtime_error {
public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or other numerical breakdown mid-run. CLI maps this to
// exit code 2.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check_contract(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

}  // namespace sdq
