#include "mfeq/riccati.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfeq {

UWSZYBlock uwszy(const LQModel& model, const SolutionSlice& slice, double tau, double t) {
  const Eigen::MatrixXd F = model.F(t);
  const Eigen::MatrixXd F0 = model.F0(t);
  const Eigen::MatrixXd Fh = F + model.Fbar(t);
  const Eigen::MatrixXd F0h = F0 + model.F0bar(t);
  const Eigen::MatrixXd D = model.D(t);
  const Eigen::MatrixXd D0 = model.D0(t);
  const Eigen::MatrixXd Dh = D + model.Dbar(t);
  const Eigen::MatrixXd D0h = D0 + model.D0bar(t);
  const Eigen::MatrixXd C = model.C(t);
  const Eigen::MatrixXd Ch = C + model.Cbar(t);
  const Eigen::VectorXd th = model.theta(t);
  const Eigen::VectorXd th0 = model.theta0(t);

  const Eigen::MatrixXd& L = slice.Lambda;
  const Eigen::MatrixXd& b = slice.beta;
  const Eigen::VectorXd& g = slice.gamma;

  UWSZYBlock blk;
  blk.U = F.transpose() * L * F + F0.transpose() * L * F0 + model.R(tau, t);
  blk.U = 0.5 * (blk.U + blk.U.transpose()).eval();
  blk.W = Fh.transpose() * L * Fh + F0h.transpose() * b * F0h + model.R(tau, t) +
          model.Rbar(tau, t);
  blk.W = 0.5 * (blk.W + blk.W.transpose()).eval();
  blk.S = D.transpose() * L * F + D0.transpose() * L * F0 + L * C + model.M(tau, t);
  blk.Z = Dh.transpose() * L * Fh + D0h.transpose() * b * F0h + b * Ch + model.M(tau, t) +
          model.Mbar(tau, t);
  blk.Y = Ch.transpose() * g + 2.0 * Fh.transpose() * L * th +
          2.0 * F0h.transpose() * b * th0 + model.r(tau, t) + model.rbar(tau, t);
  return blk;
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& A, const char* what, double t) {
  const Eigen::MatrixXd S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.eigenvalues().minCoeff() <= 1e-10) {
    std::ostringstream os;
    os << what << " loses positive-definiteness at t=" << t
       << " (min eigenvalue " << es.eigenvalues().minCoeff() << ")";
    throw IllConditioned(os.str());
  }
  return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// RiccatiSolution accessors

template <typename T>
const T& RiccatiSolution::node_of(const std::vector<std::vector<T>>& rows, std::size_t i,
                                  std::size_t j) const {
  return rows[i][(j - i) * static_cast<std::size_t>(substeps)];
}

const Eigen::MatrixXd& RiccatiSolution::Lambda_node(std::size_t i, std::size_t j) const {
  return node_of(Lambda_rows, i, j);
}
const Eigen::MatrixXd& RiccatiSolution::beta_node(std::size_t i, std::size_t j) const {
  return node_of(beta_rows, i, j);
}
const Eigen::VectorXd& RiccatiSolution::gamma_node(std::size_t i, std::size_t j) const {
  return node_of(gamma_rows, i, j);
}
double RiccatiSolution::kappa_node(std::size_t i, std::size_t j) const {
  return node_of(kappa_rows, i, j);
}

template <typename T>
T RiccatiSolution::row_value_at(const std::vector<std::vector<T>>& rows, std::size_t i,
                                double t) const {
  const auto& row = rows[i];
  const double t0 = grid.node(i);
  const double te = std::max(t, t0);  // extension for t < tau
  const double tend = grid.horizon();
  const double H = row_times[1] - row_times[0];
  double pos = (std::min(te, tend) - t0) / H;
  const auto last = static_cast<double>(row.size() - 1);
  pos = std::clamp(pos, 0.0, last);
  const auto f = static_cast<std::size_t>(pos);
  if (static_cast<double>(f) >= last) return row.back();
  const double w = pos - static_cast<double>(f);
  return (1.0 - w) * row[f] + w * row[f + 1];
}

template <typename T>
T RiccatiSolution::interp_row(const std::vector<std::vector<T>>& rows, double tau,
                              double t) const {
  const double T_ = grid.horizon();
  const double tc = std::clamp(tau, 0.0, T_);
  const std::size_t i = std::min(grid.locate(tc), grid.size() - 2);
  const double a = (tc - grid.node(i)) / (grid.node(i + 1) - grid.node(i));
  if (a <= 0.0) return row_value_at(rows, i, t);
  if (a >= 1.0) return row_value_at(rows, i + 1, t);
  return (1.0 - a) * row_value_at(rows, i, t) + a * row_value_at(rows, i + 1, t);
}

Eigen::MatrixXd RiccatiSolution::Lambda(double tau, double t) const {
  return interp_row(Lambda_rows, tau, t);
}
Eigen::MatrixXd RiccatiSolution::beta(double tau, double t) const {
  return interp_row(beta_rows, tau, t);
}
Eigen::VectorXd RiccatiSolution::gamma(double tau, double t) const {
  return interp_row(gamma_rows, tau, t);
}
double RiccatiSolution::kappa(double tau, double t) const {
  return interp_row(kappa_rows, tau, t);
}

template <typename T>
T RiccatiSolution::interp_diag(const std::vector<T>& diag, double t) const {
  const double T_ = grid.horizon();
  const double h = diag_times[1] - diag_times[0];
  double pos = std::clamp(t, 0.0, T_) / h;
  const auto last = static_cast<double>(diag.size() - 1);
  pos = std::clamp(pos, 0.0, last);
  const auto f = static_cast<std::size_t>(pos);
  if (static_cast<double>(f) >= last) return diag.back();
  const double w = pos - static_cast<double>(f);
  return (1.0 - w) * diag[f] + w * diag[f + 1];
}

Eigen::MatrixXd RiccatiSolution::Lambda_at(double t) const {
  return interp_diag(Lambda_diag, t);
}
Eigen::MatrixXd RiccatiSolution::beta_at(double t) const { return interp_diag(beta_diag, t); }
Eigen::VectorXd RiccatiSolution::gamma_at(double t) const { return interp_diag(gamma_diag, t); }

SolutionSlice RiccatiSolution::slice(double tau, double t) const {
  return SolutionSlice{Lambda(tau, t), beta(tau, t), gamma(tau, t)};
}

SolutionSlice RiccatiSolution::diag_slice(double t) const {
  return SolutionSlice{Lambda_at(t), beta_at(t), gamma_at(t)};
}

void RiccatiSolution::finalize_checks(const LQModel& model) {
  const std::size_t N = cells();
  double sym = 0.0;
  for (std::size_t i = 0; i <= N; ++i) {
    for (const auto& L : Lambda_rows[i]) {
      sym = std::max(sym, (L - L.transpose()).cwiseAbs().maxCoeff());
    }
    for (const auto& b : beta_rows[i]) {
      sym = std::max(sym, (b - b.transpose()).cwiseAbs().maxCoeff());
    }
  }
  info.symmetry_defect = sym;

  // Terminal conditions must be assignments: compare against the same
  // symmetrized expressions the solvers store, so the test is bitwise.
  for (std::size_t i = 0; i <= N; ++i) {
    const double tau = grid.node(i);
    const Eigen::MatrixXd P = model.P(tau);
    const Eigen::MatrixXd Pb = model.Pbar(tau);
    const Eigen::MatrixXd Lterm = 0.5 * (P + P.transpose());
    const Eigen::MatrixXd bterm = 0.5 * (P + Pb + (P + Pb).transpose());
    const double dL = (Lambda_rows[i].back() - Lterm).cwiseAbs().maxCoeff();
    const double db = (beta_rows[i].back() - bterm).cwiseAbs().maxCoeff();
    const double dg =
        (gamma_rows[i].back() - (model.p(tau) + model.pbar(tau))).cwiseAbs().maxCoeff();
    const double dk = std::abs(kappa_rows[i].back());
    if (dL > 0.0 || db > 0.0 || dg > 0.0 || dk > 0.0) {
      std::ostringstream os;
      os << "terminal condition not exact at tau=" << tau;
      throw NotConverged(os.str());
    }
  }
}

// ---------------------------------------------------------------------------
// Residuals

namespace {

double sup_norm(const Eigen::MatrixXd& A) { return A.cwiseAbs().maxCoeff(); }

}  // namespace

ResidualMatrices residual_matrices(const LQModel& model, const RiccatiSolution& sol,
                                   double tau, double t) {
  const auto& rt = sol.row_times;
  const double H = rt[1] - rt[0];
  const std::size_t sub = static_cast<std::size_t>(sol.substeps);

  // Snap tau to the nearest row node and t to the nearest interior row sample.
  const std::size_t i = sol.grid.nearest(std::min(tau, sol.grid.horizon()));
  const std::size_t first = i * sub;
  const std::size_t last = rt.size() - 1;
  if (first + 1 > last - 1 || i >= sol.cells()) {
    // Rows at or next to tau = T have no interior samples to difference.
    throw ModelError("residual undefined: no interior row samples at this tau");
  }
  const double pos = std::clamp(t, rt[first], rt[last]) / H;
  auto f = static_cast<std::size_t>(std::llround(pos));
  f = std::clamp(f, first + 1, last - 1);

  const double tt = rt[f];
  const std::size_t o = f - first;
  const auto& Lrow = sol.Lambda_rows[i];
  const auto& brow = sol.beta_rows[i];
  const auto& grow = sol.gamma_rows[i];
  const auto& krow = sol.kappa_rows[i];

  // Fourth-order five-point stencils (one-sided near the row ends) keep the
  // estimator's truncation error below the solver's own error even for stiff
  // models; short rows fall back to the three-point central difference.
  auto deriv = [o, H](const auto& row) {
    using T = std::decay_t<decltype(row[0])>;
    const std::size_t len = row.size();
    T d;
    if (len >= 5) {
      if (o >= 2 && o + 2 < len) {
        d = ((row[o - 2] - row[o + 2]) + 8.0 * (row[o + 1] - row[o - 1])) / (12.0 * H);
      } else if (o == 1) {
        d = (-3.0 * row[0] - 10.0 * row[1] + 18.0 * row[2] - 6.0 * row[3] + row[4]) /
            (12.0 * H);
      } else {
        const std::size_t n = len - 1;
        d = (3.0 * row[n] + 10.0 * row[n - 1] - 18.0 * row[n - 2] + 6.0 * row[n - 3] -
             row[n - 4]) /
            (12.0 * H);
      }
    } else {
      d = (row[o + 1] - row[o - 1]) / (2.0 * H);
    }
    return d;
  };
  const Eigen::MatrixXd dL = deriv(Lrow);
  const Eigen::MatrixXd db = deriv(brow);
  const Eigen::VectorXd dg = deriv(grow);
  const double dk = deriv(krow);

  const double tau_i = sol.grid.node(i);
  const SolutionSlice row{Lrow[o], brow[o], grow[o]};
  const SolutionSlice dia = sol.diag_slice(tt);
  const UWSZYBlock bt = uwszy(model, dia, tt, tt);
  const UWSZYBlock br = uwszy(model, row, tau_i, tt);
  const Eigen::MatrixXd Ui = spd_inverse(bt.U, "U(t;t)", tt);
  const Eigen::MatrixXd Wi = spd_inverse(bt.W, "W(t;t)", tt);

  const Eigen::MatrixXd B = model.B(tt);
  const Eigen::MatrixXd Bh = B + model.Bbar(tt);
  const Eigen::MatrixXd D = model.D(tt);
  const Eigen::MatrixXd Dh = D + model.Dbar(tt);
  const Eigen::MatrixXd D0 = model.D0(tt);
  const Eigen::MatrixXd D0h = D0 + model.D0bar(tt);
  const Eigen::VectorXd th = model.theta(tt);
  const Eigen::VectorXd th0 = model.theta0(tt);
  const Eigen::VectorXd b0 = model.b0(tt);

  ResidualMatrices out;
  out.tau_used = tau_i;
  out.t_used = tt;

  const Eigen::MatrixXd SU = bt.S * Ui;  // S_t U_t^{-1}
  out.LLambda = dL + model.Q(tau_i, tt) + D.transpose() * row.Lambda * D +
                D0.transpose() * row.Lambda * D0 + row.Lambda * B +
                B.transpose() * row.Lambda + SU * br.U * SU.transpose() -
                br.S * SU.transpose() - SU * br.S.transpose();

  const Eigen::MatrixXd ZW = bt.Z * Wi;  // Z_t W_t^{-1}
  out.Lbeta = db + model.Q(tau_i, tt) + model.Qbar(tau_i, tt) +
              Dh.transpose() * row.Lambda * Dh + D0h.transpose() * row.beta * D0h +
              row.beta * Bh + Bh.transpose() * row.beta + ZW * br.W * ZW.transpose() -
              br.Z * ZW.transpose() - ZW * br.Z.transpose();

  const Eigen::VectorXd WiY = Wi * bt.Y;  // W_t^{-1} Y_t
  out.Lgamma = dg + model.q(tau_i, tt) + model.qbar(tau_i, tt) + Bh.transpose() * row.gamma +
               2.0 * Dh.transpose() * row.Lambda * th +
               2.0 * D0h.transpose() * row.beta * th0 + 2.0 * row.beta * b0 +
               ZW * br.W * WiY - br.Z * WiY - ZW * br.Y;

  out.Lkappa = dk + b0.dot(row.gamma) + th.dot(row.Lambda * th) + th0.dot(row.beta * th0) +
               0.25 * WiY.dot(br.W * WiY) - 0.5 * br.Y.dot(WiY);
  return out;
}

Residuals residual(const LQModel& model, const RiccatiSolution& sol, double tau, double t) {
  const ResidualMatrices m = residual_matrices(model, sol, tau, t);
  Residuals r;
  r.rLambda = sup_norm(m.LLambda);
  r.rbeta = sup_norm(m.Lbeta);
  r.rgamma = m.Lgamma.cwiseAbs().maxCoeff();
  r.rkappa = std::abs(m.Lkappa);
  return r;
}

Residuals max_residual(const LQModel& model, const RiccatiSolution& sol, std::size_t stride) {
  Residuals worst;
  const std::size_t sub = static_cast<std::size_t>(sol.substeps);
  const std::size_t N = sol.cells();
  if (stride == 0) stride = 1;
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t first = i * sub;
    const std::size_t last = sol.row_times.size() - 1;
    if (first + 1 > last - 1) continue;
    for (std::size_t f = first + 1; f < last; f += stride) {
      const Residuals r = residual(model, sol, sol.grid.node(i), sol.row_times[f]);
      worst.rLambda = std::max(worst.rLambda, r.rLambda);
      worst.rbeta = std::max(worst.rbeta, r.rbeta);
      worst.rgamma = std::max(worst.rgamma, r.rgamma);
      worst.rkappa = std::max(worst.rkappa, r.rkappa);
    }
  }
  return worst;
}

}  // namespace mfeq
