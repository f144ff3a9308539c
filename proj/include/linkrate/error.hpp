#pragma once

#include <stdexcept>
#include <string>

namespace linkrate {

// Parameter outside the admissible model domain (u, d, j, tolerances...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A floating-point recursion lost more precision than the guard allows.
class NumericalInstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exact enumeration would exceed the configured work budget.
class CapacityError : public std::runtime_error {
 public:
  CapacityError(const std::string& what, double required_work)
      : std::runtime_error(what), required_work_(required_work) {}

  double required_work() const noexcept { return required_work_; }

 private:
  double required_work_;
};

// Not enough samples for an empirical estimate.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace linkrate
