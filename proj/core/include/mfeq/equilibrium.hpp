#ifndef MFEQ_EQUILIBRIUM_HPP
#define MFEQ_EQUILIBRIUM_HPP

#include <Eigen/Dense>
#include <vector>

#include "mfeq/model.hpp"
#include "mfeq/riccati.hpp"

namespace mfeq {

/// First and second moments of a state law.  The quadratic value ansatz and
/// the functional G see a measure only through (mean, cov); the simulator
/// owns sample-based empirical measures.
struct MeasureMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  static MeasureMoments point(Eigen::VectorXd mean);
  static MeasureMoments gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  /// cov must be square, symmetric to 1e-10, with min eigenvalue >= -1e-10.
  void validate() const;

  /// Second moment M2^2 = ||mean||^2 + tr(cov).
  double second_moment() const;
};

/// Affine control perturbation v(x) = A x + c, the witness class for the
/// first-order equilibrium condition.
struct AffinePerturbation {
  Eigen::MatrixXd A;  // m x d
  Eigen::VectorXd c;  // m
};

/// Equilibrium feedback gains sampled on a time grid:
///   action(t, x, mu) = -Theta(t) (x - mean) - Theta_bar(t) mean - offset(t)
/// with Theta = U(t;t)^{-1} S(t;t)', Theta_bar = W(t;t)^{-1} Z(t;t)', and
/// offset = (1/2) W(t;t)^{-1} Y(t;t).  Gains interpolate linearly between
/// nodes; the map is affine in x, hence Lipschitz by construction.
class FeedbackStrategy {
 public:
  FeedbackStrategy() = default;

  /// Gains from the solved diagonal fields of `sol`; throws IllConditioned
  /// when U(t;t) or W(t;t) loses definiteness at some node.
  static FeedbackStrategy from_solution(const LQModel& model, const RiccatiSolution& sol);

  /// Gains supplied directly (closed-form examples).
  static FeedbackStrategy from_grids(std::vector<double> times,
                                     std::vector<Eigen::MatrixXd> Theta,
                                     std::vector<Eigen::MatrixXd> Theta_bar,
                                     std::vector<Eigen::VectorXd> offset);

  Eigen::VectorXd action(double t, const Eigen::VectorXd& x,
                         const MeasureMoments& moments) const;

  Eigen::MatrixXd Theta(double t) const;
  Eigen::MatrixXd Theta_bar(double t) const;
  Eigen::VectorXd offset(double t) const;

  /// The feedback at frozen moments as a plain affine map of x.
  AffinePerturbation as_affine(double t, const MeasureMoments& moments) const;

  Eigen::Index state_dim() const;
  Eigen::Index control_dim() const;
  const std::vector<double>& times() const { return times_; }

 private:
  std::vector<double> times_;
  std::vector<Eigen::MatrixXd> Theta_;
  std::vector<Eigen::MatrixXd> Theta_bar_;
  std::vector<Eigen::VectorXd> offset_;

  template <typename T>
  T interp(const std::vector<T>& values, double t) const;
};

/// action(t, x, mu) of the strategy; free-function spelling of
/// FeedbackStrategy::action.
Eigen::VectorXd feedback(const FeedbackStrategy& strategy, double t, const Eigen::VectorXd& x,
                         const MeasureMoments& moments);

/// Quadratic value ansatz
///   V(tau; t, mu) = tr(Lambda(tau;t) cov) + mean' beta(tau;t) mean
///                   + gamma(tau;t) . mean + kappa(tau;t).
double value(const RiccatiSolution& sol, double tau, double t, const MeasureMoments& moments);

/// Terminal cost hat-g(tau; mu) = tr(P(tau) cov) + mean'(P+Pbar)(tau) mean
/// + (p+pbar)(tau) . mean; equals value(sol, tau, T, mu) for a solved system.
double terminal_value(const LQModel& model, double tau, const MeasureMoments& moments);

/// The functional G^mu(tau; t, v) for affine v, in closed form: with
/// push-forward mean m_v = A mean + c,
///   G = tr(U(tau;t) A cov A') + m_v' W(tau;t) m_v + 2 tr(S(tau;t) A cov)
///       + 2 mean' Z(tau;t) m_v + Y(tau;t) . m_v.
/// Throws IllConditioned when the diagonal blocks U(t;t), W(t;t) are not
/// positive definite (the equilibrium underlying the solution is undefined).
double g_functional(const LQModel& model, const RiccatiSolution& sol, double tau, double t,
                    const MeasureMoments& moments, const AffinePerturbation& v);

/// The equilibrium feedback at (t, moments) as an affine map of x, built from
/// the diagonal fields: x -> -Theta x + (Theta - Theta_bar) mean - offset.
AffinePerturbation equilibrium_affine(const LQModel& model, const RiccatiSolution& sol,
                                      double t, const MeasureMoments& moments);

/// Gamma^{t,alpha-hat}(t, mu; v) computed as G^mu_t(v) - G^mu_t(alpha-hat),
/// which equals the first-order cost sensitivity of a spike deviation to v;
/// nonnegative whenever U(t;t), W(t;t) are positive definite, zero at
/// v = equilibrium_affine(t, mu).  Both G evaluations share one coefficient
/// block at (t; t) so the difference is exact at the equilibrium.
double gamma(const LQModel& model, const RiccatiSolution& sol, double t,
             const MeasureMoments& moments, const AffinePerturbation& v);

/// Absolute value of the master-equation left-hand side at (tau, t, moments):
/// the moment-weighted sum of the four equation residuals, which contains the
/// G^mu(tau; t, alpha-hat) term through its closed form.  Evaluation is
/// snapped to the stored sample nearest (tau, t); at the terminal time it
/// returns |V(tau; T, mu) - hat-g(tau; mu)| at the nearest node instead.
double master_residual(const LQModel& model, const RiccatiSolution& sol, double tau, double t,
                       const MeasureMoments& moments);

}  // namespace mfeq

#endif  // MFEQ_EQUILIBRIUM_HPP
