#ifndef DOSEOPT_ERRORS_HPP
#define DOSEOPT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace doseopt {

/// Invalid model, design or study input. The message names the offending field.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dose outside the design space, bad group index, or a model evaluated
/// where it is not defined.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Information matrix is numerically singular where an inverse is needed.
class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed support whose gradient vectors cannot identify all parameters.
class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimizer could not produce a usable design.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace doseopt

#endif  // DOSEOPT_ERRORS_HPP
