#ifndef MFEQ_MODEL_IO_HPP
#define MFEQ_MODEL_IO_HPP

#include <string>
#include <variant>

#include "mfeq/model.hpp"

namespace mfeq {

/// Exponential-growth portfolio model with relative performance concern
/// (power or log utility).  Loaded from model files with "type": "nonlq".
struct NonLQModel {
  double T = 1.0;
  TimeFn mu, sigma, sigma0;  // scalar coefficient functions of t
  double theta = 0.0;        // competition weight in [0, 1]
  double delta = 1.0;        // relative risk tolerance, > 0 (1 = log utility)
  DiscountFn lambda;
  std::string name;

  void validate() const;
};

using AnyModel = std::variant<LQModel, NonLQModel>;

/// Loads and validates a model file; throws ModelError with a location
/// prefix on parse or shape problems.  `load_model` insists on "type": "lq".
LQModel load_model(const std::string& path);
AnyModel load_any_model(const std::string& path);

/// Same, but from an in-memory JSON document.
LQModel parse_model(const std::string& json_text);
AnyModel parse_any_model(const std::string& json_text);

}  // namespace mfeq

#endif  // MFEQ_MODEL_IO_HPP
