#pragma once

#include <stdexcept>
#include <string>

namespace commlim {

// Base of every error thrown by the library. Callers that only care about
// "something went wrong" catch this; the subclasses name the failure class.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A parameter outside the family's domain (simplex, unit interval, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Fisher information evaluated at a boundary point.
class SingularityError : public Error {
 public:
  using Error::Error;
};

// An enumeration would exceed the desk-scale caps (nk <= 24, d <= 20, ...).
class CapacityError : public Error {
 public:
  using Error::Error;
};

// The requested computation is not available for this input representation.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Not enough sensors or bits for the protocol to cover every coordinate.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// A transcript list that does not match the protocol that should have produced it.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// Least-squares design matrix without full column rank.
class RankError : public Error {
 public:
  using Error::Error;
};

// The preconditions of an inequality (e.g. Fano's) do not hold.
class InapplicableError : public Error {
 public:
  using Error::Error;
};

}  // namespace commlim
