#ifndef MFEQ_RICCATI_HPP
#define MFEQ_RICCATI_HPP

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "mfeq/grid.hpp"
#include "mfeq/model.hpp"

namespace mfeq {

/// Values of the solution fields at one point (tau, t).
struct SolutionSlice {
  Eigen::MatrixXd Lambda;  // d x d
  Eigen::MatrixXd beta;    // d x d
  Eigen::VectorXd gamma;   // d
};

/// The five auxiliary matrices entering the feedback map and the functional G:
///   U = F'ΛF + F0'ΛF0 + R
///   W = (F+Fb)'Λ(F+Fb) + (F0+F0b)'β(F0+F0b) + R + Rb
///   S = D'ΛF + D0'ΛF0 + ΛC + M
///   Z = (D+Db)'Λ(F+Fb) + (D0+D0b)'β(F0+F0b) + β(C+Cb) + M + Mb
///   Y = (C+Cb)'γ + 2(F+Fb)'Λθ + 2(F0+F0b)'βθ0 + r + rb
/// with every field evaluated at the same (tau, t).
struct UWSZYBlock {
  Eigen::MatrixXd U, W;  // m x m, symmetric
  Eigen::MatrixXd S, Z;  // d x m
  Eigen::VectorXd Y;     // m
};

UWSZYBlock uwszy(const LQModel& model, const SolutionSlice& slice, double tau, double t);

/// Inverse of a symmetric matrix that must be positive definite; throws
/// IllConditioned naming `what` and the time when the minimum eigenvalue
/// drops below 1e-10.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& A, const char* what, double t);

struct SolverInfo {
  std::string method;
  std::size_t N = 0;
  int substeps = 4;
  int iterations_total = 0;  // Picard iterations summed over windows
  int windows = 0;
  bool window_halved = false;
  bool outside_scope = false;  // M or Mbar nonzero: no well-posedness guarantee
  bool pd_pass = false;
  bool mono_pass = false;
  int gamma_iterations = 0;
  int gamma_windows = 0;
  double diag_sup = 0.0;   // max ‖Λ̂‖ observed over the diagonal sweep
  double diag_bound = 0.0; // a-priori bound K1 exp(K2 T)
  bool bound_ok = true;
  double symmetry_defect = 0.0;
  // systemic-risk advisory
  bool advisory_checked = false;
  bool advisory_ok = true;
  double advisory_k = 0.0;
  double advisory_limit = 0.0;   // max(4C^2, 1)
  double iterate_bound = 0.0;    // 2C
  double iterate_sup = 0.0;      // max |transformed iterate| observed
};

/// Triangular-grid samples of (Λ, β, γ, κ) plus densely stored diagonals.
///
/// Rows live on the refined t-axis `row_times` (grid refined `substeps`-fold);
/// row i starts at its own node, rows(i, f) holds the value at
/// (t_i; row_times[i*substeps + f]).  Diagonals live on `diag_times`, twice as
/// fine again, so Runge-Kutta midpoint stages of row integrations align with
/// stored diagonal samples.
class RiccatiSolution {
 public:
  TriangularGrid grid;
  int substeps = 4;
  std::vector<double> row_times;
  std::vector<double> diag_times;

  std::vector<std::vector<Eigen::MatrixXd>> Lambda_rows, beta_rows;
  std::vector<std::vector<Eigen::VectorXd>> gamma_rows;
  std::vector<std::vector<double>> kappa_rows;

  std::vector<Eigen::MatrixXd> Lambda_diag, beta_diag;
  std::vector<Eigen::VectorXd> gamma_diag;

  SolverInfo info;

  std::size_t cells() const { return grid.cells(); }
  std::size_t row_offset(std::size_t i) const { return i * static_cast<std::size_t>(substeps); }

  // Exact node samples, i <= j.
  const Eigen::MatrixXd& Lambda_node(std::size_t i, std::size_t j) const;
  const Eigen::MatrixXd& beta_node(std::size_t i, std::size_t j) const;
  const Eigen::VectorXd& gamma_node(std::size_t i, std::size_t j) const;
  double kappa_node(std::size_t i, std::size_t j) const;

  // Interpolated evaluation anywhere on [0,T]^2 (extension K(tau;t)=K(tau;tau)
  // applies for t < tau): linear in t along rows, linear between row nodes in tau.
  Eigen::MatrixXd Lambda(double tau, double t) const;
  Eigen::MatrixXd beta(double tau, double t) const;
  Eigen::VectorXd gamma(double tau, double t) const;
  double kappa(double tau, double t) const;

  // Diagonal fields Λ(t;t), β(t;t), γ(t;t), linear on diag_times.
  Eigen::MatrixXd Lambda_at(double t) const;
  Eigen::MatrixXd beta_at(double t) const;
  Eigen::VectorXd gamma_at(double t) const;

  SolutionSlice slice(double tau, double t) const;
  SolutionSlice diag_slice(double t) const;

  /// Verifies terminal conditions, symmetry, and (when `check_order` is set)
  /// the tau-monotonicity of Λ on node samples.  Populates info.symmetry_defect.
  void finalize_checks(const LQModel& model);

 private:
  template <typename T>
  T interp_row(const std::vector<std::vector<T>>& rows, double tau, double t) const;
  template <typename T>
  const T& node_of(const std::vector<std::vector<T>>& rows, std::size_t i, std::size_t j) const;
  template <typename T>
  T row_value_at(const std::vector<std::vector<T>>& rows, std::size_t i, double t) const;
  template <typename T>
  T interp_diag(const std::vector<T>& diag, double t) const;
};

struct Residuals {
  double rLambda = 0.0;
  double rbeta = 0.0;
  double rgamma = 0.0;
  double rkappa = 0.0;
};

/// Raw left-hand sides of the four equations at the stored sample nearest to
/// (tau, t); time derivatives by central finite differences along the row.
/// The moment-weighted sum of these four is the master-equation residual.
struct ResidualMatrices {
  Eigen::MatrixXd LLambda, Lbeta;  // d x d
  Eigen::VectorXd Lgamma;          // d
  double Lkappa = 0.0;
  double tau_used = 0.0;           // snapped evaluation point
  double t_used = 0.0;
};

ResidualMatrices residual_matrices(const LQModel& model, const RiccatiSolution& sol,
                                   double tau, double t);

/// Sup-norms of residual_matrices at the same point.
Residuals residual(const LQModel& model, const RiccatiSolution& sol, double tau, double t);

/// Maximum residuals over interior row samples (step controls subsampling).
Residuals max_residual(const LQModel& model, const RiccatiSolution& sol,
                       std::size_t stride = 1);

/// Backward marching scheme on a uniform partition with N cells: frozen-kernel
/// classical Riccati solves for the diagonal, Lyapunov integrations for the
/// rows, a second pass for β, a windowed fixed point for γ, quadrature for κ.
RiccatiSolution solve_partition(const LQModel& model, std::size_t N, int substeps = 4);

/// Windowed Picard iteration on the diagonal, re-integrating all rows per
/// sweep.  `window <= 0` selects the default T/10.
RiccatiSolution solve_fixed_point(const LQModel& model, const TriangularGrid& grid,
                                  double tol = 1e-10, int max_iter = 200,
                                  double window = -1.0, int substeps = 4);

struct SystemicRiskParams {
  double k = 1.0;      // mean-reversion rate
  double q = 1.0;      // running mean-deviation weight
  double c = 1.0;      // terminal mean-deviation weight
  double eta = 1.0;    // running variance weight
  double sigma = 1.0;  // volatility
  double rho = 0.5;    // common-noise correlation, in [0, 1]
  DiscountFn lambda;   // non-decreasing, lambda(0)=1
  double T = 1.0;
};

/// Scalar non-local Riccati equation of the inter-bank model, solved through
/// the shifted unknown Λ + (q/2)λ(t−τ) by a windowed fixed point.  β, γ are
/// identically zero for this model; κ is filled by quadrature.
RiccatiSolution solve_systemic_risk(const SystemicRiskParams& params, std::size_t N,
                                    double tol = 1e-10, int max_iter = 200,
                                    int substeps = 4);

}  // namespace mfeq

#endif  // MFEQ_RICCATI_HPP
