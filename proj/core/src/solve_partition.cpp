#include <cmath>

#include "mfeq/riccati.hpp"
#include "riccati_detail.hpp"

namespace mfeq {

namespace detail {

using Eigen::MatrixXd;

double op_norm(const MatrixXd& A) {
  Eigen::JacobiSVD<MatrixXd> svd(A);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

void alloc_storage(RiccatiSolution& sol, Eigen::Index d, const TriangularGrid& grid,
                   int substeps) {
  sol.grid = grid;
  sol.substeps = substeps;
  const std::size_t N = grid.cells();
  const std::size_t sub = static_cast<std::size_t>(substeps);
  const double T = grid.horizon();
  const std::size_t nrow = N * sub;
  sol.row_times.resize(nrow + 1);
  for (std::size_t f = 0; f <= nrow; ++f) {
    sol.row_times[f] = T * static_cast<double>(f) / static_cast<double>(nrow);
  }
  sol.row_times.back() = T;
  const std::size_t ndiag = 2 * nrow;
  sol.diag_times.resize(ndiag + 1);
  for (std::size_t f = 0; f <= ndiag; ++f) {
    sol.diag_times[f] = T * static_cast<double>(f) / static_cast<double>(ndiag);
  }
  sol.diag_times.back() = T;

  sol.Lambda_rows.assign(N + 1, {});
  sol.beta_rows.assign(N + 1, {});
  sol.gamma_rows.assign(N + 1, {});
  sol.kappa_rows.assign(N + 1, {});
  for (std::size_t i = 0; i <= N; ++i) {
    const std::size_t len = (N - i) * sub + 1;
    sol.Lambda_rows[i].assign(len, MatrixXd::Zero(d, d));
    sol.beta_rows[i].assign(len, MatrixXd::Zero(d, d));
    sol.gamma_rows[i].assign(len, Eigen::VectorXd::Zero(d));
    sol.kappa_rows[i].assign(len, 0.0);
  }
  sol.Lambda_diag.assign(ndiag + 1, MatrixXd::Zero(d, d));
  sol.beta_diag.assign(ndiag + 1, MatrixXd::Zero(d, d));
  sol.gamma_diag.assign(ndiag + 1, Eigen::VectorXd::Zero(d));
}

void init_storage(RiccatiSolution& sol, const LQModel& model, const TriangularGrid& grid,
                  int substeps) {
  alloc_storage(sol, model.dims.d, grid, substeps);
  const std::size_t N = grid.cells();
  for (std::size_t i = 0; i <= N; ++i) {
    const double tau = grid.node(i);
    // Terminal conditions, exact by assignment.
    const MatrixXd P = model.P(tau);
    const MatrixXd Pb = model.Pbar(tau);
    sol.Lambda_rows[i].back() = 0.5 * (P + P.transpose());
    sol.beta_rows[i].back() = 0.5 * (P + Pb + (P + Pb).transpose());
    sol.gamma_rows[i].back() = model.p(tau) + model.pbar(tau);
    sol.kappa_rows[i].back() = 0.0;
  }
}

BoundConstants lambda_bound_constants(const LQModel& model,
                                      const std::vector<double>& sample_times) {
  double nP = 0.0, nQ = 0.0, nB = 0.0, nD = 0.0, nD0 = 0.0;
  for (double t : sample_times) {
    nP = std::max(nP, op_norm(model.P(t)));
    nB = std::max(nB, op_norm(model.B(t)));
    nD = std::max(nD, op_norm(model.D(t)));
    nD0 = std::max(nD0, op_norm(model.D0(t)));
    for (double tau : sample_times) {
      if (tau <= t) nQ = std::max(nQ, op_norm(model.Q(tau, t)));
    }
  }
  const double T = sample_times.back();
  BoundConstants bc;
  bc.K1 = nP + nQ * T;
  bc.K2 = 2.0 * nB + nD * nD + nD0 * nD0;
  bc.limit = bc.K1 * std::exp(bc.K2 * T);
  return bc;
}

}  // namespace detail

using Eigen::MatrixXd;
using detail::op_norm;

RiccatiSolution solve_partition(const LQModel& model, std::size_t N, int substeps) {
  model.validate();
  if (N < 2) throw ModelError("partition count N must be at least 2");
  if (substeps < 2) throw ModelError("substeps must be at least 2");
  const TriangularGrid grid = TriangularGrid::uniform(N, model.T);

  // Hard gate: semidefiniteness of the cost data (delta = 0). The strict
  // delta-coercivity of R enters the well-posedness guarantee only, and is
  // reported rather than enforced; the mean-variance model has R = 0 yet a
  // perfectly good solution, protected at run time by the U(t;t) SPD guard.
  const ConditionReport gate = check_pd_conditions(model, grid.nodes(), 0.0);
  if (!gate.pass) {
    throw ConditionsViolated("positivity conditions fail: " + gate.summary());
  }
  const ConditionReport pd = check_pd_conditions(model, grid.nodes(), 1e-8);
  const ConditionReport mono = check_monotonicity(model, grid.nodes());

  RiccatiSolution sol;
  detail::init_storage(sol, model, grid, substeps);
  sol.info.method = "partition";
  sol.info.N = N;
  sol.info.substeps = substeps;
  sol.info.outside_scope = model.has_cross_terms();
  sol.info.pd_pass = pd.pass;
  sol.info.mono_pass = mono.pass;

  const std::size_t sub = static_cast<std::size_t>(substeps);
  const double H = model.T / static_cast<double>(N * sub);
  const std::size_t cell_fine = 2 * sub;  // diagonal samples per cell

  // ---------------------------------------------------------------- Lambda
  double diag_sup = 0.0;
  {
    std::vector<MatrixXd> hat(cell_fine + 1);    // frozen solve across one cell
    std::vector<MatrixXd> theta(cell_fine + 1);  // gain at the same samples

    for (std::size_t k = N; k-- > 0;) {
      const double tk = grid.node(k);
      const double tk1 = grid.node(k + 1);
      const double tau_k = tk;

      auto frozen_rhs = [&](double t, const MatrixXd& L) -> MatrixXd {
        const MatrixXd B = model.B(t);
        const MatrixXd C = model.C(t);
        const MatrixXd D = model.D(t);
        const MatrixXd F = model.F(t);
        const MatrixXd D0 = model.D0(t);
        const MatrixXd F0 = model.F0(t);
        const MatrixXd G =
            model.R(tau_k, t) + F.transpose() * L * F + F0.transpose() * L * F0;
        const MatrixXd Gi = spd_inverse(G, "U(t;t)", t);
        const MatrixXd num =
            D.transpose() * L * F + D0.transpose() * L * F0 + L * C + model.M(tau_k, t);
        MatrixXd out = -(L * B + B.transpose() * L + D.transpose() * L * D +
                         D0.transpose() * L * D0 + model.Q(tau_k, t) -
                         num * Gi * num.transpose());
        return out;
      };

      // Frozen classical Riccati, terminal = row k's value at t_{k+1}.
      hat[cell_fine] = sol.Lambda_rows[k][sub];
      for (std::size_t s = cell_fine; s-- > 0;) {
        const double t = tk + (H / 2.0) * static_cast<double>(s + 1);
        MatrixXd next = detail::rk4_back(hat[s + 1], t, H / 2.0, frozen_rhs);
        hat[s] = 0.5 * (next + next.transpose());
        diag_sup = std::max(diag_sup, op_norm(hat[s]));
      }

      for (std::size_t s = 0; s <= cell_fine; ++s) {
        const double t = tk + (H / 2.0) * static_cast<double>(s);
        const MatrixXd F = model.F(t);
        const MatrixXd F0 = model.F0(t);
        const MatrixXd G = model.R(tau_k, t) + F.transpose() * hat[s] * F +
                           F0.transpose() * hat[s] * F0;
        const MatrixXd Gi = spd_inverse(G, "U(t;t)", t);
        const MatrixXd num = model.D(t).transpose() * hat[s] * F +
                             model.D0(t).transpose() * hat[s] * F0 + hat[s] * model.C(t) +
                             model.M(tau_k, t);
        theta[s] = Gi * num.transpose();  // m x d
      }

      auto theta_at = [&](double t) -> const MatrixXd& {
        const double pos = (t - tk) / (H / 2.0);
        auto s = static_cast<std::size_t>(std::llround(pos));
        if (s > cell_fine) s = cell_fine;
        return theta[s];
      };

      // Lyapunov rows l = 0..k (l = k is the one-cell extension past the
      // row's nominal domain, supplying the row's own node sample).
      for (std::size_t l = 0; l <= k; ++l) {
        const double tau_l = grid.node(l);
        auto row_rhs = [&](double t, const MatrixXd& L) -> MatrixXd {
          const MatrixXd& Th = theta_at(t);
          const MatrixXd A = model.B(t) - model.C(t) * Th;
          const MatrixXd DF = model.D(t) - model.F(t) * Th;
          const MatrixXd D0F = model.D0(t) - model.F0(t) * Th;
          const MatrixXd Mv = model.M(tau_l, t);
          MatrixXd src = model.Q(tau_l, t) + Th.transpose() * model.R(tau_l, t) * Th -
                         Mv * Th - Th.transpose() * Mv.transpose();
          MatrixXd out = -(L * A + A.transpose() * L + DF.transpose() * L * DF +
                           D0F.transpose() * L * D0F + src);
          return out;
        };
        auto& row = sol.Lambda_rows[l];
        const std::size_t base = (k - l) * sub;
        for (std::size_t s = sub; s-- > 0;) {
          const double t = tk + H * static_cast<double>(s + 1);
          MatrixXd next = detail::rk4_back(row[base + s + 1], t, H, row_rhs);
          row[base + s] = 0.5 * (next + next.transpose());
        }
      }

      // Diagonal samples interior to this cell come from the frozen solve;
      // each node takes its own row's value for consistency with the rows.
      for (std::size_t s = 1; s < cell_fine; ++s) {
        sol.Lambda_diag[k * cell_fine + s] = hat[s];
      }
      sol.Lambda_diag[k * cell_fine] = sol.Lambda_rows[k][0];
      (void)tk1;
    }
    sol.Lambda_diag.back() = sol.Lambda_rows[N].back();
  }

  const detail::BoundConstants bc = detail::lambda_bound_constants(model, grid.nodes());
  sol.info.diag_sup = diag_sup;
  sol.info.diag_bound = bc.limit;
  sol.info.bound_ok = true;
  if (pd.pass && mono.pass && !model.has_cross_terms()) {
    sol.info.bound_ok = diag_sup <= bc.limit * (1.0 + 1e-9) + 1e-12;
  }

  // ------------------------------------------------------------------ beta
  {
    std::vector<MatrixXd> hat(cell_fine + 1);
    std::vector<MatrixXd> theta(cell_fine + 1);

    auto lambda_row_at = [&](std::size_t l, double t) -> MatrixXd {
      const double pos = (t - grid.node(l)) / H;
      return detail::row_interp(sol.Lambda_rows[l], pos);
    };

    for (std::size_t k = N; k-- > 0;) {
      const double tk = grid.node(k);
      const double tau_k = tk;

      auto frozen_rhs = [&](double t, const MatrixXd& bta) -> MatrixXd {
        const MatrixXd Bh = model.B(t) + model.Bbar(t);
        const MatrixXd Ch = model.C(t) + model.Cbar(t);
        const MatrixXd Dh = model.D(t) + model.Dbar(t);
        const MatrixXd Fh = model.F(t) + model.Fbar(t);
        const MatrixXd D0h = model.D0(t) + model.D0bar(t);
        const MatrixXd F0h = model.F0(t) + model.F0bar(t);
        const MatrixXd Lrow = lambda_row_at(k, t);
        const MatrixXd G = model.R(tau_k, t) + model.Rbar(tau_k, t) +
                           Fh.transpose() * Lrow * Fh + F0h.transpose() * bta * F0h;
        const MatrixXd Gi = spd_inverse(G, "W(t;t)", t);
        const MatrixXd num = Dh.transpose() * Lrow * Fh + D0h.transpose() * bta * F0h +
                             bta * Ch + model.M(tau_k, t) + model.Mbar(tau_k, t);
        MatrixXd out = -(bta * Bh + Bh.transpose() * bta + D0h.transpose() * bta * D0h +
                         Dh.transpose() * Lrow * Dh + model.Q(tau_k, t) +
                         model.Qbar(tau_k, t) - num * Gi * num.transpose());
        return out;
      };

      hat[cell_fine] = sol.beta_rows[k][sub];
      for (std::size_t s = cell_fine; s-- > 0;) {
        const double t = tk + (H / 2.0) * static_cast<double>(s + 1);
        MatrixXd next = detail::rk4_back(hat[s + 1], t, H / 2.0, frozen_rhs);
        hat[s] = 0.5 * (next + next.transpose());
      }

      for (std::size_t s = 0; s <= cell_fine; ++s) {
        const double t = tk + (H / 2.0) * static_cast<double>(s);
        const MatrixXd Fh = model.F(t) + model.Fbar(t);
        const MatrixXd F0h = model.F0(t) + model.F0bar(t);
        const MatrixXd Dh = model.D(t) + model.Dbar(t);
        const MatrixXd D0h = model.D0(t) + model.D0bar(t);
        const MatrixXd Ch = model.C(t) + model.Cbar(t);
        const MatrixXd Lrow = lambda_row_at(k, t);
        const MatrixXd G = model.R(tau_k, t) + model.Rbar(tau_k, t) +
                           Fh.transpose() * Lrow * Fh + F0h.transpose() * hat[s] * F0h;
        const MatrixXd Gi = spd_inverse(G, "W(t;t)", t);
        const MatrixXd num = Dh.transpose() * Lrow * Fh + D0h.transpose() * hat[s] * F0h +
                             hat[s] * Ch + model.M(tau_k, t) + model.Mbar(tau_k, t);
        theta[s] = Gi * num.transpose();
      }

      auto theta_at = [&](double t) -> const MatrixXd& {
        const double pos = (t - tk) / (H / 2.0);
        auto s = static_cast<std::size_t>(std::llround(pos));
        if (s > cell_fine) s = cell_fine;
        return theta[s];
      };

      for (std::size_t l = 0; l <= k; ++l) {
        const double tau_l = grid.node(l);
        auto row_rhs = [&](double t, const MatrixXd& bta) -> MatrixXd {
          const MatrixXd& Th = theta_at(t);
          const MatrixXd Bh = model.B(t) + model.Bbar(t);
          const MatrixXd Ch = model.C(t) + model.Cbar(t);
          const MatrixXd A = Bh - Ch * Th;
          const MatrixXd DF = model.D(t) + model.Dbar(t) - (model.F(t) + model.Fbar(t)) * Th;
          const MatrixXd D0F =
              model.D0(t) + model.D0bar(t) - (model.F0(t) + model.F0bar(t)) * Th;
          const MatrixXd Lrow = lambda_row_at(l, t);
          const MatrixXd Mh = model.M(tau_l, t) + model.Mbar(tau_l, t);
          const MatrixXd Rh = model.R(tau_l, t) + model.Rbar(tau_l, t);
          MatrixXd src = model.Q(tau_l, t) + model.Qbar(tau_l, t) +
                         Th.transpose() * Rh * Th - Mh * Th - Th.transpose() * Mh.transpose();
          MatrixXd out = -(bta * A + A.transpose() * bta + DF.transpose() * Lrow * DF +
                           D0F.transpose() * bta * D0F + src);
          return out;
        };
        auto& row = sol.beta_rows[l];
        const std::size_t base = (k - l) * sub;
        for (std::size_t s = sub; s-- > 0;) {
          const double t = tk + H * static_cast<double>(s + 1);
          MatrixXd next = detail::rk4_back(row[base + s + 1], t, H, row_rhs);
          row[base + s] = 0.5 * (next + next.transpose());
        }
      }

      for (std::size_t s = 1; s < cell_fine; ++s) {
        sol.beta_diag[k * cell_fine + s] = hat[s];
      }
      sol.beta_diag[k * cell_fine] = sol.beta_rows[k][0];
    }
    sol.beta_diag.back() = sol.beta_rows[N].back();
  }

  // ----------------------------------------------------------- gamma, kappa
  detail::gamma_pass(model, sol, 1e-10, 200, model.T / 10.0);
  detail::kappa_pass(model, sol);

  sol.finalize_checks(model);
  return sol;
}

}  // namespace mfeq
