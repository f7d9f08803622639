#ifndef MFEQ_ERRORS_HPP
#define MFEQ_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mfeq {

/// Malformed or inconsistent model input (bad JSON, wrong shapes, unknown kinds).
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

/// Standing positivity or monotonicity conditions fail for the supplied model.
class ConditionsViolated : public std::runtime_error {
 public:
  explicit ConditionsViolated(const std::string& what) : std::runtime_error(what) {}
};

/// A matrix that must be inverted is singular or numerically unusable.
class IllConditioned : public std::runtime_error {
 public:
  explicit IllConditioned(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative solver exhausted its iteration budget without meeting tolerance.
class NotConverged : public std::runtime_error {
 public:
  explicit NotConverged(const std::string& what) : std::runtime_error(what) {}
};

/// A simulated path produced a non-finite state or cost.
class SimulationDiverged : public std::runtime_error {
 public:
  explicit SimulationDiverged(const std::string& what) : std::runtime_error(what) {}
};

/// A state constraint was violated (e.g. positivity for multiplicative dynamics).
class DomainViolation : public std::runtime_error {
 public:
  explicit DomainViolation(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mfeq

#endif  // MFEQ_ERRORS_HPP
