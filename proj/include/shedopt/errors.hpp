#pragma once

#include <stdexcept>
#include <string>

namespace shedopt {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (Matpower or JSON). Carries a 1-based line number
/// when one is known, 0 otherwise.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_ = 0;
};

/// Input is grammatical but violates the case schema (missing or
/// wrongly-typed field).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A structurally complete case breaks a model invariant (dangling bus
/// reference, v_min > v_max, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Network topology unusable for a solve (disconnected case).
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Scenario cannot be applied or solved (bad trips, solver breakdown).
class ScenarioError : public Error {
 public:
  using Error::Error;
};

}  // namespace shedopt
