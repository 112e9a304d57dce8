#pragma once

#include <stdexcept>
#include <string>

namespace rerrfact {

// Malformed or invariant-violating input data (corpus, claims, predictions,
// persisted models). Maps to CLI exit code 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command-line usage or configuration. Maps to CLI exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure talking to an external scorer process. Maps to CLI exit code 3.
class ScorerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rerrfact
