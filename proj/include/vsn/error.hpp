#pragma once

#include <stdexcept>
#include <string>

namespace vsn {

// Input data is inconsistent: malformed files, broken invariants, coverage gaps.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Caller supplied an argument outside an operation's domain.
class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// A linear system or iteration could not produce a finite answer.
class SolverError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace vsn
