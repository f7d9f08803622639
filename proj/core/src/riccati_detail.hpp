#ifndef MFEQ_SRC_RICCATI_DETAIL_HPP
#define MFEQ_SRC_RICCATI_DETAIL_HPP

#include <functional>

#include "mfeq/riccati.hpp"

namespace mfeq {
namespace detail {

/// Allocates row/diagonal storage and assigns the terminal conditions
/// (exact, by assignment).  Rows are sized (cells - i) * substeps + 1.
void alloc_storage(RiccatiSolution& sol, Eigen::Index d, const TriangularGrid& grid,
                   int substeps);
void init_storage(RiccatiSolution& sol, const LQModel& model, const TriangularGrid& grid,
                  int substeps);

/// One backward RK4 step t -> t - h for a matrix ODE X' = f(t, X).
template <typename Mat, typename Rhs>
Mat rk4_back(const Mat& X, double t, double h, Rhs&& f) {
  const Mat k1 = f(t, X);
  const Mat x2 = X - 0.5 * h * k1;
  const Mat k2 = f(t - 0.5 * h, x2);
  const Mat x3 = X - 0.5 * h * k2;
  const Mat k3 = f(t - 0.5 * h, x3);
  const Mat x4 = X - h * k3;
  const Mat k4 = f(t - h, x4);
  Mat out = X - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return out;
}

/// Natural cubic through uniformly spaced node values (Catmull-Rom tangents,
/// one-sided at the ends).  Used to evaluate Picard diagonal guesses between
/// grid nodes.
template <typename T>
T catmull_rom(const std::vector<T>& ys, double t0, double h, double t) {
  const std::size_t n = ys.size();
  double pos = (t - t0) / h;
  pos = std::min(std::max(pos, 0.0), static_cast<double>(n - 1));
  std::size_t j = static_cast<std::size_t>(pos);
  if (j >= n - 1) j = n - 2;
  const double u = pos - static_cast<double>(j);
  auto tangent = [&](std::size_t i) -> T {
    if (i == 0) {
      T m = ys[1] - ys[0];
      return m;
    }
    if (i == n - 1) {
      T m = ys[n - 1] - ys[n - 2];
      return m;
    }
    T m = 0.5 * (ys[i + 1] - ys[i - 1]);
    return m;
  };
  const T m0 = tangent(j);
  const T m1 = tangent(j + 1);
  const double u2 = u * u;
  const double u3 = u2 * u;
  T out = (2 * u3 - 3 * u2 + 1) * ys[j] + (u3 - 2 * u2 + u) * m0 +
          (-2 * u3 + 3 * u2) * ys[j + 1] + (u3 - u2) * m1;
  return out;
}

/// Linear interpolation of a stored row at an arbitrary fine position
/// `pos` counted in row steps from the row's own start.
template <typename T>
T row_interp(const std::vector<T>& row, double pos) {
  pos = std::min(std::max(pos, 0.0), static_cast<double>(row.size() - 1));
  const std::size_t f = std::min(static_cast<std::size_t>(pos), row.size() - 2);
  const double w = pos - static_cast<double>(f);
  if (w == 0.0) return row[f];
  T out = (1.0 - w) * row[f] + w * row[f + 1];
  return out;
}

/// Windowed Picard solve for gamma (linear but non-local through the
/// diagonal), then kappa by cumulative composite Simpson.  Expects Lambda and
/// beta rows plus diagonals already filled.
void gamma_pass(const LQModel& model, RiccatiSolution& sol, double tol, int max_iter,
                double window);
void kappa_pass(const LQModel& model, RiccatiSolution& sol);

/// Spectral norm of a (small, dense) matrix.
double op_norm(const Eigen::MatrixXd& A);

/// Operator-norm sups of model coefficients used by the a-priori bound
/// ‖diag‖ <= K1 exp(K2 T); sampled on the diagonal axis.
struct BoundConstants {
  double K1 = 0.0;
  double K2 = 0.0;
  double limit = 0.0;  // K1 exp(K2 T)
};
BoundConstants lambda_bound_constants(const LQModel& model,
                                      const std::vector<double>& sample_times);

}  // namespace detail
}  // namespace mfeq

#endif  // MFEQ_SRC_RICCATI_DETAIL_HPP
