#pragma once

#include <stdexcept>
#include <string>

namespace idg {

// Base of every error this library throws on a violated precondition.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Negative mass, rows that do not sum to one, and similar.
class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

class ZeroProbabilityEvent : public Error {
 public:
  using Error::Error;
};

// A modelling assumption (unique optimum, constant Bayes image, ...) fails.
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

// The hypothesis of a construction does not hold for the given inputs.
class HypothesisError : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace idg
