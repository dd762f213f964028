#pragma once

#include <stdexcept>
#include <string>

namespace geopo {

// A primitive action violated its contract (non-positive or non-finite
// magnitude).
class InvalidActionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rejection sampling ran out of attempts while building a scene or task.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The oracle could not name a unique correct choice (geometric tie or an
// ill-posed question).
class AmbiguityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An episode could not be serialized because it violates the grammar's
// invariants (bad answer letter, tag tokens inside think text, ...).
class SerializeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an API precondition: malformed tree, mismatched shapes,
// candidate not in the candidate set, and the like. These are programming
// errors, not data errors.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Training hit a non-finite objective or gradient. Carries a JSON dump of
// the offending rollout tree so the failure can be inspected offline.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, std::string dump)
      : std::runtime_error(what), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

// File could not be read, written, or decoded.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace geopo
