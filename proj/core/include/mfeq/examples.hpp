#ifndef MFEQ_EXAMPLES_HPP
#define MFEQ_EXAMPLES_HPP

#include <cstdint>
#include <vector>

#include "mfeq/equilibrium.hpp"
#include "mfeq/model.hpp"
#include "mfeq/model_io.hpp"
#include "mfeq/riccati.hpp"
#include "mfeq/simulate.hpp"
#include "mfeq/verifier.hpp"

namespace mfeq {

// ---------------------------------------------------------------------------
// Mean-variance portfolio selection (scalar wealth, one risky asset).

struct MeanVarianceParams {
  TimeFn r = TimeFn::zero(1, 1);                                     // interest rate
  TimeFn rho = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, 0.2));     // excess return
  TimeFn theta = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, 0.3));   // idiosyncratic vol
  TimeFn theta0 = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, 0.1));  // common vol
  double eta = 1.0;         // variance aversion
  DiscountFn lambda = DiscountFn::one();
  double T = 1.0;
};

/// The mean-variance model as an LQ instance: linear wealth dynamics driven
/// by the invested amount, purely terminal cost (eta/2) lambda(T-tau) Var +
/// discounted mean shortfall.
LQModel mean_variance_model(const MeanVarianceParams& p);

/// Closed-form solution fields and equilibrium feedback, plus the same data
/// sampled into RiccatiSolution storage for direct comparison with solver
/// output.  All integrals are evaluated adaptively.
struct MeanVarianceClosedForm {
  MeanVarianceParams params;
  RiccatiSolution solution;
  FeedbackStrategy strategy;

  double Lambda(double tau, double t) const;
  double gamma(double tau, double t) const;
  double kappa(double tau, double t) const;

  /// Feedback decomposition: action = -gain(t) (x - mean) + intercept(t).
  double gain(double t) const;
  double intercept(double t) const;
  double feedback_value(double t, double x, double mean) const;
};

MeanVarianceClosedForm mean_variance_closed_form(const MeanVarianceParams& p,
                                                 std::size_t N = 200, int substeps = 4);

// ---------------------------------------------------------------------------
// Inter-bank lending / systemic risk (scalar log-reserves).

/// The systemic-risk model as an LQ instance with separable discounted
/// kernels; parameters as in SystemicRiskParams.
LQModel systemic_risk_model(const SystemicRiskParams& p);

struct SystemicRiskEquilibrium {
  LQModel model;
  RiccatiSolution solution;
  FeedbackStrategy strategy;
};

/// Solves the scalar non-local Riccati equation through the dedicated fixed
/// point and wraps the equilibrium feedback -2 (Lambda(t;t) + q/2)(x - mean).
SystemicRiskEquilibrium systemic_risk_equilibrium(const SystemicRiskParams& p, std::size_t N,
                                                  double tol = 1e-10, int max_iter = 200,
                                                  int substeps = 4);

// ---------------------------------------------------------------------------
// Relative performance with power or log utility (multiplicative dynamics).

using NonLQParams = NonLQModel;

/// Law statistics entering the multiplicative value ansatz:
///   I = E[(X / mean^theta)^(1 - 1/delta)],  L = E[log(X / mean^theta)]
/// with mean the first moment of the law itself.  Exact for Point and
/// LogNormal initial laws.
struct LawStats {
  double I = 1.0;
  double L = 0.0;
};

LawStats nonlq_law_stats(const NonLQModel& model, const InitialLaw& init);

/// Closed-form equilibrium of the relative-performance problem.  The value is
/// (1 - 1/delta)^{-1} A(tau; t) I_mu for delta != 1 and A(tau; t) L_mu +
/// B(tau; t) for log utility.
struct NonLQClosedForm {
  NonLQModel params;

  /// Equilibrium investment fraction delta (1 - theta) mu / den, with
  /// den = sigma^2 + (1 - theta)(1 - theta + delta theta) sigma0^2.
  double abar(double t) const;

  double A(double tau, double t) const;
  double Bfield(double tau, double t) const;

  double value_point(double tau, double t, double x) const;
  double value_moment(double tau, double t, double I_mu, double L_mu) const;

  /// Residual of the backward field equations at (tau, t), derivatives by
  /// central finite differences.
  double ode_residual(double tau, double t) const;

  /// First-order cost gap Delta(t, vbar) of spiking the constant fraction
  /// vbar against abar; nonnegative, zero exactly at vbar = abar.
  double delta_gap(double t, double vbar, double I_mu) const;
};

NonLQClosedForm nonlq_solution(const NonLQModel& p);

/// Monte Carlo verification of the multiplicative equilibrium: spikes the
/// constant fraction abar(0) + offset at time zero and compares the measured
/// cost derivative with delta_gap.  Null `init` selects a log-normal law with
/// log-mean 0 and log-variance 0.04.
DeltaReport nonlq_verify(const NonLQModel& p, std::size_t N, std::size_t M, double dt,
                         std::uint64_t seed, std::vector<double> eps_list = {},
                         double offset = 0.3, const InitialLaw* init = nullptr,
                         int threads = 0);

}  // namespace mfeq

#endif  // MFEQ_EXAMPLES_HPP
