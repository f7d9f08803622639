#ifndef MFEQ_TESTS_TEST_SUPPORT_HPP
#define MFEQ_TESTS_TEST_SUPPORT_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mfeq/examples.hpp"
#include "mfeq/model.hpp"
#include "mfeq/riccati.hpp"
#include "mfeq/rng.hpp"

namespace mfeq::testing {

/// Deterministic uniform draws in [lo, hi] addressed by (seed, index); thin
/// wrapper over the library's counter-based generator so test models are
/// reproducible across platforms and thread counts.
class DrawStream {
 public:
  explicit DrawStream(std::uint64_t seed) : seed_(seed) {}

  double uniform(double lo, double hi) {
    double z[2];
    rng::normals(seed_, 900, index_++, 0, 0, z, 2);
    // Map a normal through the error function for a uniform in (0, 1).
    const double u = 0.5 * std::erfc(-z[0] / std::sqrt(2.0));
    return lo + (hi - lo) * u;
  }

  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(std::floor(uniform(0.0, 1.0) * (hi - lo + 1) * (1.0 - 1e-12)));
  }

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols, double scale) {
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = uniform(-scale, scale);
    }
    return out;
  }

  /// Random PSD matrix G G' with entries of G at the given scale.
  Eigen::MatrixXd psd(Eigen::Index n, double scale) {
    const Eigen::MatrixXd g = matrix(n, n, scale);
    return (g * g.transpose()).eval();
  }

 private:
  std::uint64_t seed_;
  std::uint64_t index_ = 0;
};

struct RandomModelCase {
  LQModel model;
  double delta = 0.0;  // pd margin valid over the whole triangle
};

/// Random LQ model satisfying the positivity and monotonicity conditions by
/// construction: separable kernels with a decreasing discount and constant
/// PSD bases, cross terms zero, coefficients scaled to stay well inside the
/// contraction regime of both solvers.  d, m <= 3, n = k = 1.
inline RandomModelCase random_pd_model(std::uint64_t seed) {
  DrawStream draw(seed);
  const int d = draw.uniform_int(1, 3);
  const int m = draw.uniform_int(1, 3);
  const double T = 1.0;
  // Hyperbolic discounts do not factorize over (tau, t), so the non-local
  // coupling is genuinely exercised (an exponential lambda splits into
  // f(tau) g(t) and degenerates the system to a classical one).
  const DiscountFn lam =
      DiscountFn::hyperbolic(draw.uniform(0.8, 1.6), draw.uniform(0.8, 1.6));

  LQModel mo = zero_model({d, m, 1, 1}, T);
  mo.name = "random-" + std::to_string(seed);
  mo.discount = lam;

  const double dyn = 0.45;
  mo.b0 = TimeFn::constant(draw.matrix(d, 1, 0.3));
  mo.B = TimeFn::constant(draw.matrix(d, d, dyn / std::sqrt(double(d))));
  mo.Bbar = TimeFn::constant(draw.matrix(d, d, dyn / std::sqrt(double(d))));
  mo.C = TimeFn::constant(draw.matrix(d, m, dyn));
  mo.Cbar = TimeFn::constant(draw.matrix(d, m, 0.3));
  mo.theta = TimeFn::constant(draw.matrix(d, 1, 0.3));
  mo.D = TimeFn::constant(draw.matrix(d, d, 0.25 / std::sqrt(double(d))));
  mo.Dbar = TimeFn::constant(draw.matrix(d, d, 0.2 / std::sqrt(double(d))));
  mo.F = TimeFn::constant(draw.matrix(d, m, 0.3));
  mo.Fbar = TimeFn::constant(draw.matrix(d, m, 0.2));
  mo.theta0 = TimeFn::constant(draw.matrix(d, 1, 0.2));
  mo.D0 = TimeFn::constant(draw.matrix(d, d, 0.2 / std::sqrt(double(d))));
  mo.D0bar = TimeFn::constant(draw.matrix(d, d, 0.15 / std::sqrt(double(d))));
  mo.F0 = TimeFn::constant(draw.matrix(d, m, 0.2));
  mo.F0bar = TimeFn::constant(draw.matrix(d, m, 0.15));

  const double r_margin = 0.25;
  auto sep = [&lam](const Eigen::MatrixXd& base) {
    return TwoTimeFn::discounted_separable(lam, TimeFn::constant(base));
  };
  mo.Q = sep(draw.psd(d, 0.5));
  mo.Qbar = sep(draw.psd(d, 0.4));
  mo.R = sep(r_margin * Eigen::MatrixXd::Identity(m, m) + draw.psd(m, 0.4));
  mo.Rbar = sep(draw.psd(m, 0.3));
  mo.q = sep(draw.matrix(d, 1, 0.4));
  mo.qbar = sep(draw.matrix(d, 1, 0.3));
  mo.r = sep(draw.matrix(m, 1, 0.3));
  mo.rbar = sep(draw.matrix(m, 1, 0.3));

  auto term = [&lam, T](const Eigen::MatrixXd& base) {
    return OneTimeFn::discounted_separable(lam, TimeFn::constant(base), T);
  };
  mo.P = term(draw.psd(d, 0.5));
  mo.Pbar = term(draw.psd(d, 0.4));
  mo.p = term(draw.matrix(d, 1, 0.4));
  mo.pbar = term(draw.matrix(d, 1, 0.3));

  mo.validate();
  // The margin delta I sits under lambda(t - tau), so the triangle-wide pd
  // margin carries the smallest discount value.
  return {std::move(mo), r_margin * lam(T)};
}

/// Sup over the triangular nodes of `a` of the absolute difference between
/// the two solutions' (Lambda, beta, gamma, kappa) node samples.  `b` may
/// live on a finer grid as long as it contains the nodes of `a`.
inline double sup_node_difference(const RiccatiSolution& a, const RiccatiSolution& b) {
  double worst = 0.0;
  const std::size_t n = a.grid.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = a.grid.node(i);
    for (std::size_t j = i; j < n; ++j) {
      const double t = a.grid.node(j);
      const std::size_t bi = b.grid.nearest(tau);
      const std::size_t bj = b.grid.nearest(t);
      worst = std::max(worst,
                       (a.Lambda_node(i, j) - b.Lambda_node(bi, bj)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (a.beta_node(i, j) - b.beta_node(bi, bj)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (a.gamma_node(i, j) - b.gamma_node(bi, bj)).cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(a.kappa_node(i, j) - b.kappa_node(bi, bj)));
    }
  }
  return worst;
}

/// Least-squares slope of log(err) against log(N).
inline double loglog_slope(const std::vector<double>& Ns, const std::vector<double>& errs) {
  const std::size_t n = Ns.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(Ns[i]);
    const double y = std::log(std::max(errs[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Classical time-consistent Riccati oracle for the inter-bank model with
/// lambda == 1: integrates L' = 2kL + 2(L + q/2)^2 - eta/2 backward from
/// L(T) = c/2 with dense RK4 steps, then evaluates at t by linear
/// interpolation on a fine grid.
class ClassicalSystemicOracle {
 public:
  ClassicalSystemicOracle(double k, double q, double c, double eta, double T,
                          std::size_t steps = 20000)
      : T_(T), values_(steps + 1) {
    const double h = T / static_cast<double>(steps);
    auto f = [k, q, eta](double L) {
      return 2.0 * k * L + 2.0 * (L + 0.5 * q) * (L + 0.5 * q) - 0.5 * eta;
    };
    values_[steps] = 0.5 * c;
    for (std::size_t i = steps; i > 0; --i) {
      const double L = values_[i];
      const double k1 = f(L);
      const double k2 = f(L - 0.5 * h * k1);
      const double k3 = f(L - 0.5 * h * k2);
      const double k4 = f(L - h * k3);
      values_[i - 1] = L - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }

  double operator()(double t) const {
    const double s = std::clamp(t / T_, 0.0, 1.0) * static_cast<double>(values_.size() - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(s), values_.size() - 2);
    const double w = s - static_cast<double>(i);
    return (1.0 - w) * values_[i] + w * values_[i + 1];
  }

 private:
  double T_;
  std::vector<double> values_;
};

/// Example-1 parameter set matching the bundled mean-variance model file
/// (hyperbolic discount 1/(1+s)).
inline MeanVarianceParams ex1_params() {
  MeanVarianceParams p;
  p.lambda = DiscountFn::hyperbolic(1.0, 1.0);
  return p;
}

/// Example-2 parameter set matching the bundled systemic-risk model file.
inline SystemicRiskParams ex2_params() {
  SystemicRiskParams p;
  p.k = 6.0;
  p.q = 1.0;
  p.c = 1.0;
  p.eta = 1.0;
  p.sigma = 1.0;
  p.rho = 0.5;
  p.lambda = DiscountFn::exponential(-0.1);
  p.T = 1.0;
  return p;
}

/// Default parameters of the multiplicative relative-performance example,
/// matching the bundled model file.
inline NonLQModel nonlq_params() {
  NonLQModel p;
  p.T = 1.0;
  p.mu = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, 0.3));
  p.sigma = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, 0.4));
  p.sigma0 = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, 0.2));
  p.theta = 0.5;
  p.delta = 2.0;
  p.lambda = DiscountFn::hyperbolic(1.0, 1.0);
  p.name = "log-power-utility";
  return p;
}

}  // namespace mfeq::testing

#endif  // MFEQ_TESTS_TEST_SUPPORT_HPP
