#pragma once

// Error taxonomy shared across the library.  Every throw carries a message
// that names the offending quantity; callers are expected to let these
// propagate rather than catch-and-continue.

#include <stdexcept>
#include <string>

namespace seqnet {

// Input violates a documented precondition (shape, index set, flag).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A linear system has no solution (inconsistent right-hand side).
class NoSolutionError : public std::runtime_error {
 public:
  explicit NoSolutionError(const std::string& what) : std::runtime_error(what) {}
};

// A matrix that must have full row rank does not.
class SingularityError : public std::runtime_error {
 public:
  explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

// A size or runtime budget would be exceeded (grids, desk-scale caps).
class BudgetError : public std::runtime_error {
 public:
  explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

// A requested accuracy could not be reached; message reports what was achieved.
class ToleranceError : public std::runtime_error {
 public:
  explicit ToleranceError(const std::string& what) : std::runtime_error(what) {}
};

// The construction is impossible on the given domain or network layout.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace seqnet
