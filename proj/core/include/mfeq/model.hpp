#ifndef MFEQ_MODEL_HPP
#define MFEQ_MODEL_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mfeq/time_fn.hpp"

namespace mfeq {

struct Dims {
  int d = 1;  // state
  int m = 1;  // control
  int n = 1;  // idiosyncratic Brownian motions
  int k = 1;  // common Brownian motions
};

/// Linear-quadratic extended mean-field model with common noise.
///
/// Dynamics   dX = (b0 + B X + Bbar E[X|W0] + C a + Cbar E[a|W0]) dt
///               + (theta + D X + Dbar E[X|W0] + F a + Fbar E[a|W0]) dB
///               + (theta0 + D0 X + D0bar E[X|W0] + F0 a + F0bar E[a|W0]) dW0
/// Running cost x'Qx + m'Qbar m + a'Ra + abar'Rbar abar + 2x'Ma + 2m'Mbar abar
///               + q.x + qbar.m + r.a + rbar.abar   (m = conditional mean)
/// Terminal     x'Px + m'Pbar m + p.x + pbar.m, all weights two-time kernels
/// in (tau, t) except the terminal ones which depend on tau alone.
struct LQModel {
  Dims dims;
  double T = 1.0;

  // Drift and diffusion coefficients, functions of t.
  TimeFn b0, B, Bbar, C, Cbar;
  TimeFn theta, D, Dbar, F, Fbar;
  TimeFn theta0, D0, D0bar, F0, F0bar;

  // Running cost kernels, functions of (tau, t).
  TwoTimeFn Q, Qbar, R, Rbar, M, Mbar;
  TwoTimeFn q, qbar, r, rbar;

  // Terminal cost weights, functions of tau.
  OneTimeFn P, Pbar, p, pbar;

  // Shared discount function (informational; separable kernels embed their own).
  DiscountFn discount;

  std::string name;

  /// Shape / dimension / continuity validation.  Throws ModelError.
  void validate() const;

  bool has_cross_terms() const { return !M.is_zero() || !Mbar.is_zero(); }
};

/// Builds an LQModel of the requested shape with every coefficient zero;
/// convenient seed for tests and generators.
LQModel zero_model(const Dims& dims, double T);

struct ConditionCheck {
  std::string name;
  bool pass = true;
  double worst = 0.0;   // minimum eigenvalue seen (after delta shift where applicable)
  double at_tau = 0.0;  // offending (tau, t); t unused for terminal checks
  double at_t = 0.0;
};

struct ConditionReport {
  bool pass = true;
  double delta = 0.0;  // pd margin requested (pd report only)
  std::vector<ConditionCheck> checks;
  std::string summary() const;
};

/// Positivity conditions: on every grid pair tau <= t,
///   Q, Q+Qbar >= 0,  R, R+Rbar >= delta I,  and on every node P, P+Pbar >= 0.
/// Eigenvalue tolerance -1e-10.
ConditionReport check_pd_conditions(const LQModel& model, const std::vector<double>& grid,
                                    double delta);

/// Monotonicity in the first argument: for t <= tau <= s,
///   Q(t;s) <= Q(tau;s) and the five sibling inequalities.
/// Adjacent grid pairs are checked; transitivity of <= covers all triples.
ConditionReport check_monotonicity(const LQModel& model, const std::vector<double>& grid);

}  // namespace mfeq

#endif  // MFEQ_MODEL_HPP
