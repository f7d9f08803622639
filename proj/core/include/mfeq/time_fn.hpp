#ifndef MFEQ_TIME_FN_HPP
#define MFEQ_TIME_FN_HPP

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "mfeq/errors.hpp"

namespace mfeq {

/// Matrix-valued deterministic coefficient t -> K(t) on [0, T].
///
/// Two kinds: a constant matrix, or a piecewise polynomial of degree <= 3
/// with local powers, i.e. on segment [s_j, s_{j+1}] the value is
/// sum_p C_{j,p} (t - s_j)^p.  Piecewise functions must be continuous.
class TimeFn {
 public:
  TimeFn() = default;

  static TimeFn constant(Eigen::MatrixXd value);
  static TimeFn zero(Eigen::Index rows, Eigen::Index cols);

  /// `breaks` has size K+1 covering [0, T]; `coeffs[j]` lists the matrix
  /// coefficients of segment j in increasing power (1 to 4 entries).
  static TimeFn piecewise_poly(std::vector<double> breaks,
                               std::vector<std::vector<Eigen::MatrixXd>> coeffs);

  Eigen::MatrixXd operator()(double t) const;

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  bool is_constant() const { return breaks_.empty(); }
  bool is_zero() const;

  /// Checks adjacent segment values agree at interior breakpoints.
  /// Throws ModelError when the mismatch exceeds `tol`.
  void validate_continuity(double tol = 1e-12) const;

 private:
  Eigen::MatrixXd value_;                            // constant kind
  std::vector<double> breaks_;                       // piecewise kind
  std::vector<std::vector<Eigen::MatrixXd>> coeffs_; // per segment, local powers
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
};

/// Positive scalar discount weight s -> lambda(s) on [0, T].
class DiscountFn {
 public:
  DiscountFn();  // lambda == 1

  static DiscountFn one();
  static DiscountFn exponential(double rate);        // exp(-rate*s)
  static DiscountFn hyperbolic(double a, double b);  // (1 + a*s)^(-b)
  static DiscountFn power(double exponent);          // (1 + s)^(-exponent)
  /// Catmull-Rom interpolation through (s_i, v_i); s strictly increasing.
  static DiscountFn tabulated(std::vector<double> s, std::vector<double> v);

  double operator()(double s) const;
  double derivative(double s) const;

  bool is_one() const { return kind_ == Kind::One; }

  /// max over [0, span] of |lambda| resp. |lambda'| resp. |1/lambda|,
  /// sampled densely.  Used to assemble a-priori constants.
  double sup_abs(double span) const;
  double sup_abs_derivative(double span) const;
  double sup_abs_inverse(double span) const;

 private:
  enum class Kind { One, Exponential, Hyperbolic, Power, Tabulated };
  Kind kind_ = Kind::One;
  double a_ = 0.0;
  double b_ = 0.0;
  std::vector<double> nodes_;
  std::vector<double> values_;

  double tabulated_eval(double s, bool deriv) const;
};

/// Two-time cost kernel K(tau; t) on the triangle {0 <= tau <= t <= T},
/// continuously extended by K(tau; t) = K(tau; tau) for t < tau.
class TwoTimeFn {
 public:
  TwoTimeFn() = default;

  static TwoTimeFn tau_independent(TimeFn K0);
  /// K(tau; t) = lambda(t - tau) * K0(t).
  static TwoTimeFn discounted_separable(DiscountFn lambda, TimeFn K0);
  /// Values on the lower-triangular node set of a uniform grid over [0, T];
  /// `values[i][j]` = K(t_i; t_j) for i <= j.  Bilinear interpolation.
  static TwoTimeFn tabulated(std::vector<double> nodes,
                             std::vector<std::vector<Eigen::MatrixXd>> values);

  static TwoTimeFn zero(Eigen::Index rows, Eigen::Index cols);

  /// Evaluates K(tau; max(t, tau)).
  Eigen::MatrixXd operator()(double tau, double t) const;

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  bool is_zero() const;
  bool is_tau_independent() const { return kind_ == Kind::TauIndependent; }

  const DiscountFn& lambda() const { return lambda_; }
  const TimeFn& base() const { return base_; }
  bool is_separable() const { return kind_ == Kind::Separable; }

 private:
  enum class Kind { TauIndependent, Separable, Tabulated };
  Kind kind_ = Kind::TauIndependent;
  DiscountFn lambda_;
  TimeFn base_;
  std::vector<double> nodes_;
  std::vector<std::vector<Eigen::MatrixXd>> values_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
};

/// Terminal cost weight tau -> K(tau) on [0, T].
/// The separable kind means K(tau) = lambda(T - tau) * K0(tau) and therefore
/// carries the horizon.
class OneTimeFn {
 public:
  OneTimeFn() = default;

  static OneTimeFn plain(TimeFn K0);
  static OneTimeFn discounted_separable(DiscountFn lambda, TimeFn K0, double horizon);
  static OneTimeFn zero(Eigen::Index rows, Eigen::Index cols);

  Eigen::MatrixXd operator()(double tau) const;

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  bool is_zero() const;

 private:
  bool separable_ = false;
  DiscountFn lambda_;
  TimeFn base_;
  double horizon_ = 0.0;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
};

}  // namespace mfeq

#endif  // MFEQ_TIME_FN_HPP
