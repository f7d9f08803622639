#include <algorithm>
#include <cmath>
#include <vector>

#include "mfeq/riccati.hpp"
#include "riccati_detail.hpp"

namespace mfeq {
namespace detail {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Windowed Picard iteration on the diagonal gamma(t;t). The gamma equation is
// linear in the row unknown but non-local through Y(t;t); rows are integrated
// per window with the diagonal guess held fixed, then the node diagonal is
// refreshed from the rows' own-node values until the sup change drops below
// tol. Lambda and beta must be fully solved before this pass runs.
void gamma_pass(const LQModel& model, RiccatiSolution& sol, double tol, int max_iter,
                double window) {
  const TriangularGrid& grid = sol.grid;
  const std::size_t N = grid.cells();
  const std::size_t sub = static_cast<std::size_t>(sol.substeps);
  const std::size_t cf = 2 * sub;
  const double T = grid.horizon();
  const double cell = T / static_cast<double>(N);
  const double H = cell / static_cast<double>(sub);
  const double h2 = 0.5 * H;
  const Eigen::Index d = model.dims.d;

  if (window <= 0.0) window = T / 10.0;
  std::size_t cpw =
      static_cast<std::size_t>(std::max<long long>(1, std::llround(window / cell)));
  cpw = std::min(cpw, N);

  int total_iters = 0;

  for (int attempt = 0; attempt < 2; ++attempt) {
    bool ok = true;
    int windows_done = 0;
    std::vector<VectorXd> gnode(N + 1, VectorXd::Zero(d));
    gnode[N] = sol.gamma_rows[N][0];
    std::size_t cb = N;
    while (cb > 0) {
      const std::size_t ca = cb > cpw ? cb - cpw : 0;
      const std::size_t ga = ca * cf;
      const std::size_t gb = cb * cf;
      const std::size_t nf = gb - ga;

      // Diagonal blocks that do not involve gamma are fixed on this window.
      std::vector<MatrixXd> Wi(nf + 1), ZWi(nf + 1), Ch(nf + 1);
      std::vector<VectorXd> Ystat(nf + 1);
      for (std::size_t f = 0; f <= nf; ++f) {
        const std::size_t g = ga + f;
        const double t = sol.diag_times[g];
        const SolutionSlice sl{sol.Lambda_diag[g], sol.beta_diag[g], VectorXd::Zero(d)};
        const UWSZYBlock blk = uwszy(model, sl, t, t);
        Wi[f] = spd_inverse(blk.W, "W(t;t)", t);
        ZWi[f] = blk.Z * Wi[f];
        Ch[f] = model.C(t) + model.Cbar(t);
        Ystat[f] = blk.Y;
      }

      const std::size_t rend = std::min(N, cb + 1);
      std::vector<VectorXd> nv(rend - ca + 1);
      for (std::size_t j = cb; j <= rend; ++j) nv[j - ca] = gnode[j];
      for (std::size_t j = ca; j < cb; ++j) nv[j - ca] = gnode[cb];

      bool converged = false;
      for (int iter = 0; iter < max_iter; ++iter) {
        ++total_iters;
        std::vector<VectorXd> WiY(nf + 1);
        for (std::size_t f = 0; f <= nf; ++f) {
          const std::size_t g = ga + f;
          VectorXd gd;
          if (g % cf == 0) {
            gd = nv[g / cf - ca];
          } else {
            gd = catmull_rom(nv, grid.node(ca), cell, sol.diag_times[g]);
          }
          WiY[f] = Wi[f] * (Ch[f].transpose() * gd + Ystat[f]);
        }

        for (std::size_t l = 0; l < cb; ++l) {
          const double tau = grid.node(l);
          auto& row = sol.gamma_rows[l];
          const std::size_t base_g = l * cf;
          const std::size_t i_hi = (cb - l) * sub;
          const std::size_t i_lo = (l >= ca) ? 0 : (ca - l) * sub;
          auto rhs = [&](std::size_t g, double t, const VectorXd& y) -> VectorXd {
            const double rpos = static_cast<double>(g - base_g) / 2.0;
            const SolutionSlice sl{row_interp(sol.Lambda_rows[l], rpos),
                                   row_interp(sol.beta_rows[l], rpos), y};
            const UWSZYBlock blk = uwszy(model, sl, tau, t);
            const std::size_t f = g - ga;
            VectorXd out =
                -(model.q(tau, t) + model.qbar(tau, t) +
                  (model.B(t) + model.Bbar(t)).transpose() * y +
                  2.0 * (model.D(t) + model.Dbar(t)).transpose() *
                      (sl.Lambda * model.theta(t)) +
                  2.0 * (model.D0(t) + model.D0bar(t)).transpose() *
                      (sl.beta * model.theta0(t)) +
                  2.0 * sl.beta * model.b0(t) + ZWi[f] * (blk.W * WiY[f]) -
                  blk.Z * WiY[f] - ZWi[f] * blk.Y);
            return out;
          };
          for (std::size_t i = i_hi; i-- > i_lo;) {
            const double t1 = tau + H * static_cast<double>(i + 1);
            const std::size_t g1 = base_g + 2 * (i + 1);
            const VectorXd& y = row[i + 1];
            const VectorXd k1 = rhs(g1, t1, y);
            const VectorXd k2 = rhs(g1 - 1, t1 - h2, y - h2 * k1);
            const VectorXd k3 = rhs(g1 - 1, t1 - h2, y - h2 * k2);
            const VectorXd k4 = rhs(g1 - 2, t1 - H, y - H * k3);
            row[i] = y - (H / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
          }
        }

        double err = 0.0;
        for (std::size_t j = ca; j < cb; ++j) {
          const VectorXd fresh = sol.gamma_rows[j][0];
          err = std::max(err, (fresh - nv[j - ca]).cwiseAbs().maxCoeff());
          nv[j - ca] = fresh;
        }
        if (err <= tol) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        ok = false;
        break;
      }
      for (std::size_t j = ca; j < cb; ++j) gnode[j] = nv[j - ca];
      ++windows_done;
      cb = ca;
    }

    if (ok) {
      for (std::size_t g = 0; g < sol.gamma_diag.size(); ++g) {
        if (g % cf == 0) {
          sol.gamma_diag[g] = gnode[g / cf];
        } else {
          sol.gamma_diag[g] = catmull_rom(gnode, 0.0, cell, sol.diag_times[g]);
        }
      }
      sol.info.gamma_iterations = total_iters;
      sol.info.gamma_windows = windows_done;
      return;
    }
    if (attempt == 0) {
      cpw = std::max<std::size_t>(1, cpw / 2);
      sol.info.window_halved = true;
    }
  }
  throw NotConverged("gamma fixed point did not converge, window halving exhausted");
}

// Cumulative composite-Simpson quadrature of the kappa equation, row by row.
// The integrand is evaluated at half-step resolution from the stored rows and
// diagonals; the backward running sum makes kappa(tau;T) = 0 exact.
void kappa_pass(const LQModel& model, RiccatiSolution& sol) {
  const TriangularGrid& grid = sol.grid;
  const std::size_t N = grid.cells();
  const std::size_t sub = static_cast<std::size_t>(sol.substeps);
  const std::size_t cf = 2 * sub;
  const double cell = grid.horizon() / static_cast<double>(N);
  const double H = cell / static_cast<double>(sub);

  const std::size_t gmax = N * cf;
  std::vector<VectorXd> WiY(gmax + 1);
  for (std::size_t g = 0; g <= gmax; ++g) {
    const double t = sol.diag_times[g];
    const SolutionSlice sl{sol.Lambda_diag[g], sol.beta_diag[g], sol.gamma_diag[g]};
    const UWSZYBlock blk = uwszy(model, sl, t, t);
    WiY[g] = spd_inverse(blk.W, "W(t;t)", t) * blk.Y;
  }

  for (std::size_t l = 0; l < N; ++l) {
    const double tau = grid.node(l);
    auto& row = sol.kappa_rows[l];
    const std::size_t base_g = l * cf;
    const std::size_t steps = (N - l) * sub;

    auto integrand = [&](std::size_t g) -> double {
      const double t = sol.diag_times[g];
      const double rpos = static_cast<double>(g - base_g) / 2.0;
      const SolutionSlice sl{row_interp(sol.Lambda_rows[l], rpos),
                             row_interp(sol.beta_rows[l], rpos),
                             row_interp(sol.gamma_rows[l], rpos)};
      const UWSZYBlock blk = uwszy(model, sl, tau, t);
      const VectorXd th = model.theta(t);
      const VectorXd th0 = model.theta0(t);
      return (model.b0(t).transpose() * sl.gamma).value() +
             (th.transpose() * sl.Lambda * th).value() +
             (th0.transpose() * sl.beta * th0).value() +
             0.25 * (WiY[g].transpose() * blk.W * WiY[g]).value() -
             0.5 * (blk.Y.transpose() * WiY[g]).value();
    };

    row[steps] = 0.0;
    double right = integrand(base_g + 2 * steps);
    for (std::size_t i = steps; i-- > 0;) {
      const std::size_t g = base_g + 2 * i;
      const double mid = integrand(g + 1);
      const double left = integrand(g);
      row[i] = row[i + 1] + (H / 6.0) * (left + 4.0 * mid + right);
      right = left;
    }
  }
}

}  // namespace detail
}  // namespace mfeq
