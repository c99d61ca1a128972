// SPDX-License-Identifier: Apache-2.0
//
// Exception types shared by every module. Each maps to one error family so
// callers (and the CLI exit-code mapping) can tell them apart.

#pragma once

#include <stdexcept>
#include <string>

namespace muscle {

/// Shapes or lengths that do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on argument values was violated.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Index outside its valid range (class labels, mask labels).
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// An object was used in a state that forbids the call.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed serialized data. `field()` names the offending part.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// AUC requested on labels of a single class.
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace muscle
