#include "mfeq/equilibrium.hpp"

#include <algorithm>
#include <cmath>

#include "mfeq/errors.hpp"

namespace mfeq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MeasureMoments MeasureMoments::point(VectorXd mean) {
  MeasureMoments m;
  m.cov = MatrixXd::Zero(mean.size(), mean.size());
  m.mean = std::move(mean);
  return m;
}

MeasureMoments MeasureMoments::gaussian(VectorXd mean, MatrixXd cov) {
  MeasureMoments m;
  m.mean = std::move(mean);
  m.cov = std::move(cov);
  m.validate();
  return m;
}

void MeasureMoments::validate() const {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
    throw ModelError("measure moments: cov must be square and match the mean dimension");
  }
  if (!mean.allFinite() || !cov.allFinite()) {
    throw ModelError("measure moments: entries must be finite");
  }
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10) {
    throw ModelError("measure moments: cov is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (cov + cov.transpose()));
  if (es.eigenvalues().minCoeff() < -1e-10) {
    throw ModelError("measure moments: cov has a negative eigenvalue");
  }
}

double MeasureMoments::second_moment() const { return mean.squaredNorm() + cov.trace(); }

FeedbackStrategy FeedbackStrategy::from_solution(const LQModel& model,
                                                 const RiccatiSolution& sol) {
  FeedbackStrategy s;
  s.times_ = sol.diag_times;
  const std::size_t n = s.times_.size();
  s.Theta_.resize(n);
  s.Theta_bar_.resize(n);
  s.offset_.resize(n);
  for (std::size_t g = 0; g < n; ++g) {
    const double t = s.times_[g];
    const SolutionSlice slice{sol.Lambda_diag[g], sol.beta_diag[g], sol.gamma_diag[g]};
    const UWSZYBlock blk = uwszy(model, slice, t, t);
    const MatrixXd Ui = spd_inverse(blk.U, "U(t;t)", t);
    const MatrixXd Wi = spd_inverse(blk.W, "W(t;t)", t);
    s.Theta_[g] = Ui * blk.S.transpose();
    s.Theta_bar_[g] = Wi * blk.Z.transpose();
    s.offset_[g] = 0.5 * Wi * blk.Y;
  }
  return s;
}

FeedbackStrategy FeedbackStrategy::from_grids(std::vector<double> times,
                                              std::vector<MatrixXd> Theta,
                                              std::vector<MatrixXd> Theta_bar,
                                              std::vector<VectorXd> offset) {
  if (times.size() < 2 || Theta.size() != times.size() || Theta_bar.size() != times.size() ||
      offset.size() != times.size()) {
    throw ModelError("feedback strategy: grids must share one length >= 2");
  }
  FeedbackStrategy s;
  s.times_ = std::move(times);
  s.Theta_ = std::move(Theta);
  s.Theta_bar_ = std::move(Theta_bar);
  s.offset_ = std::move(offset);
  return s;
}

template <typename T>
T FeedbackStrategy::interp(const std::vector<T>& values, double t) const {
  const double t0 = times_.front();
  const double h = times_[1] - times_[0];
  double pos = (t - t0) / h;
  const auto last = static_cast<double>(values.size() - 1);
  pos = std::clamp(pos, 0.0, last);
  const auto f = static_cast<std::size_t>(pos);
  if (static_cast<double>(f) >= last) return values.back();
  const double w = pos - static_cast<double>(f);
  return (1.0 - w) * values[f] + w * values[f + 1];
}

VectorXd FeedbackStrategy::action(double t, const VectorXd& x,
                                  const MeasureMoments& moments) const {
  return -Theta(t) * (x - moments.mean) - Theta_bar(t) * moments.mean - offset(t);
}

MatrixXd FeedbackStrategy::Theta(double t) const { return interp(Theta_, t); }
MatrixXd FeedbackStrategy::Theta_bar(double t) const { return interp(Theta_bar_, t); }
VectorXd FeedbackStrategy::offset(double t) const { return interp(offset_, t); }

AffinePerturbation FeedbackStrategy::as_affine(double t, const MeasureMoments& moments) const {
  const MatrixXd th = Theta(t);
  AffinePerturbation v;
  v.A = -th;
  v.c = (th - Theta_bar(t)) * moments.mean - offset(t);
  return v;
}

Eigen::Index FeedbackStrategy::state_dim() const { return Theta_.front().cols(); }
Eigen::Index FeedbackStrategy::control_dim() const { return Theta_.front().rows(); }

VectorXd feedback(const FeedbackStrategy& strategy, double t, const VectorXd& x,
                  const MeasureMoments& moments) {
  return strategy.action(t, x, moments);
}

double value(const RiccatiSolution& sol, double tau, double t, const MeasureMoments& moments) {
  const MatrixXd L = sol.Lambda(tau, t);
  const MatrixXd b = sol.beta(tau, t);
  const VectorXd g = sol.gamma(tau, t);
  return L.cwiseProduct(moments.cov).sum() + moments.mean.dot(b * moments.mean) +
         g.dot(moments.mean) + sol.kappa(tau, t);
}

double terminal_value(const LQModel& model, double tau, const MeasureMoments& moments) {
  const MatrixXd P = model.P(tau);
  const MatrixXd Psum = P + model.Pbar(tau);
  const VectorXd psum = model.p(tau) + model.pbar(tau);
  return P.cwiseProduct(moments.cov).sum() + moments.mean.dot(Psum * moments.mean) +
         psum.dot(moments.mean);
}

namespace {

/// G^mu for affine v from a prepared coefficient block.
double g_from_block(const UWSZYBlock& blk, const MeasureMoments& mom,
                    const AffinePerturbation& v) {
  const VectorXd mv = v.A * mom.mean + v.c;
  const MatrixXd AcovAt = v.A * mom.cov * v.A.transpose();
  return blk.U.cwiseProduct(AcovAt).sum() + mv.dot(blk.W * mv) +
         2.0 * (blk.S * v.A).cwiseProduct(mom.cov.transpose()).sum() +
         2.0 * mom.mean.dot(blk.Z * mv) + blk.Y.dot(mv);
}

/// Equilibrium affine map from a diagonal block at time t.
AffinePerturbation equilibrium_from_block(const UWSZYBlock& blk, const MeasureMoments& mom,
                                          double t) {
  const MatrixXd Ui = spd_inverse(blk.U, "U(t;t)", t);
  const MatrixXd Wi = spd_inverse(blk.W, "W(t;t)", t);
  const MatrixXd Theta = Ui * blk.S.transpose();
  const MatrixXd Theta_bar = Wi * blk.Z.transpose();
  AffinePerturbation v;
  v.A = -Theta;
  v.c = (Theta - Theta_bar) * mom.mean - 0.5 * Wi * blk.Y;
  return v;
}

}  // namespace

double g_functional(const LQModel& model, const RiccatiSolution& sol, double tau, double t,
                    const MeasureMoments& moments, const AffinePerturbation& v) {
  moments.validate();
  // Definedness guard on the diagonal: the equilibrium behind the solution
  // requires U(t;t), W(t;t) positive definite.
  const UWSZYBlock diag = uwszy(model, sol.diag_slice(t), t, t);
  (void)spd_inverse(diag.U, "U(t;t)", t);
  (void)spd_inverse(diag.W, "W(t;t)", t);
  const UWSZYBlock blk = uwszy(model, sol.slice(tau, t), tau, t);
  return g_from_block(blk, moments, v);
}

AffinePerturbation equilibrium_affine(const LQModel& model, const RiccatiSolution& sol,
                                      double t, const MeasureMoments& moments) {
  const UWSZYBlock blk = uwszy(model, sol.diag_slice(t), t, t);
  return equilibrium_from_block(blk, moments, t);
}

double gamma(const LQModel& model, const RiccatiSolution& sol, double t,
             const MeasureMoments& moments, const AffinePerturbation& v) {
  moments.validate();
  // One shared block for the equilibrium map and both G evaluations, so
  // gamma(alpha-hat) vanishes identically rather than to interpolation error.
  const UWSZYBlock blk = uwszy(model, sol.diag_slice(t), t, t);
  const AffinePerturbation vhat = equilibrium_from_block(blk, moments, t);
  return g_from_block(blk, moments, v) - g_from_block(blk, moments, vhat);
}

double master_residual(const LQModel& model, const RiccatiSolution& sol, double tau, double t,
                       const MeasureMoments& moments) {
  moments.validate();
  const double T = sol.grid.horizon();
  const double H = sol.row_times[1] - sol.row_times[0];
  if (t >= T - 0.5 * H) {
    const double tau_n = sol.grid.node(sol.grid.nearest(std::min(tau, T)));
    return std::abs(value(sol, tau_n, T, moments) - terminal_value(model, tau_n, moments));
  }
  const ResidualMatrices rm = residual_matrices(model, sol, tau, t);
  const double lhs = rm.LLambda.cwiseProduct(moments.cov).sum() +
                     moments.mean.dot(rm.Lbeta * moments.mean) +
                     rm.Lgamma.dot(moments.mean) + rm.Lkappa;
  return std::abs(lhs);
}

}  // namespace mfeq
