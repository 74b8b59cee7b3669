#pragma once

#include <stdexcept>
#include <string>

namespace shallowtree {

/// Malformed or unusable input data (CSV contents, dataset construction).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (bad interval, bad feature id).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Model document could not be parsed or has an unsupported schema.
class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The exhaustive oracle was asked to run on an instance above its step budget.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractViolation(what);
}

}  // namespace shallowtree
