#include <algorithm>
#include <cmath>
#include <vector>

#include "mfeq/riccati.hpp"
#include "riccati_detail.hpp"

namespace mfeq {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Backward windowed Picard driver shared by the Lambda and beta passes.
// gnode holds the node-diagonal values, with gnode[N] already set to the
// terminal; sweep(ca, cb, nv) performs one Picard iteration on the window
// covering cells [ca, cb) (integrate the window rows under the guess nv,
// refresh nv from the rows' own-node values) and returns the sup change;
// flush(ca, cb, nv) integrates every remaining row over the window under the
// converged guess. Returns the total iteration count.
template <typename Sweep, typename Flush>
int run_windowed(std::size_t N, std::size_t cpw0, double tol, int max_iter,
                 std::vector<MatrixXd>& gnode, Sweep&& sweep, Flush&& flush,
                 bool& halved, int& windows_out, const char* what) {
  std::size_t cpw = cpw0;
  int total = 0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    bool ok = true;
    int windows = 0;
    std::size_t cb = N;
    while (cb > 0) {
      const std::size_t ca = cb > cpw ? cb - cpw : 0;
      const std::size_t rend = std::min(N, cb + 1);
      std::vector<MatrixXd> nv(rend - ca + 1);
      for (std::size_t j = cb; j <= rend; ++j) nv[j - ca] = gnode[j];
      for (std::size_t j = ca; j < cb; ++j) nv[j - ca] = gnode[cb];

      bool converged = false;
      for (int iter = 0; iter < max_iter; ++iter) {
        ++total;
        const double err = sweep(ca, cb, nv);
        if (err <= tol) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        ok = false;
        break;
      }
      flush(ca, cb, nv);
      for (std::size_t j = ca; j < cb; ++j) gnode[j] = nv[j - ca];
      ++windows;
      cb = ca;
    }
    if (ok) {
      windows_out = windows;
      return total;
    }
    if (attempt == 0) {
      cpw = std::max<std::size_t>(1, cpw / 2);
      halved = true;
    }
  }
  throw NotConverged(std::string(what) + " fixed point did not converge, window halving exhausted");
}

}  // namespace

RiccatiSolution solve_fixed_point(const LQModel& model, const TriangularGrid& grid,
                                  double tol, int max_iter, double window, int substeps) {
  model.validate();
  if (substeps < 2) throw ModelError("substeps must be at least 2");
  const std::size_t N = grid.cells();
  const double T = grid.horizon();
  const double cell = T / static_cast<double>(N);
  for (std::size_t i = 0; i <= N; ++i) {
    if (std::abs(grid.node(i) - cell * static_cast<double>(i)) > 1e-9 * std::max(T, 1.0)) {
      throw ModelError("solve_fixed_point supports uniform grids only");
    }
  }
  if (std::abs(T - model.T) > 1e-12 * std::max(T, 1.0)) {
    throw ModelError("grid horizon does not match the model horizon");
  }

  const ConditionReport gate = check_pd_conditions(model, grid.nodes(), 0.0);
  if (!gate.pass) {
    throw ConditionsViolated("positivity conditions fail: " + gate.summary());
  }
  const ConditionReport pd = check_pd_conditions(model, grid.nodes(), 1e-8);
  const ConditionReport mono = check_monotonicity(model, grid.nodes());

  RiccatiSolution sol;
  detail::init_storage(sol, model, grid, substeps);
  sol.info.method = "fixed-point";
  sol.info.N = N;
  sol.info.substeps = substeps;
  sol.info.outside_scope = model.has_cross_terms();
  sol.info.pd_pass = pd.pass;
  sol.info.mono_pass = mono.pass;

  const std::size_t sub = static_cast<std::size_t>(substeps);
  const std::size_t cf = 2 * sub;
  const double H = cell / static_cast<double>(sub);
  const double h2 = 0.5 * H;
  const Eigen::Index d = model.dims.d;
  if (window <= 0.0) window = T / 10.0;
  std::size_t cpw =
      static_cast<std::size_t>(std::max<long long>(1, std::llround(window / cell)));
  cpw = std::min(cpw, N);

  const MatrixXd zdd = MatrixXd::Zero(d, d);
  const VectorXd zd = VectorXd::Zero(d);

  // Densify a node-diagonal array to the half-step diagonal resolution.
  auto densify = [&](const std::vector<MatrixXd>& gnode, std::vector<MatrixXd>& diag) {
    for (std::size_t g = 0; g < diag.size(); ++g) {
      if (g % cf == 0) {
        diag[g] = gnode[g / cf];
      } else {
        diag[g] = detail::catmull_rom(gnode, 0.0, cell, sol.diag_times[g]);
      }
    }
  };

  // Evaluate the guess diagonal at a fine position inside the window.
  auto guess_at = [&](const std::vector<MatrixXd>& nv, std::size_t ca, std::size_t g) {
    MatrixXd out;
    if (g % cf == 0 && g / cf >= ca && g / cf - ca < nv.size()) {
      out = nv[g / cf - ca];
    } else {
      out = detail::catmull_rom(nv, sol.grid.node(ca), cell, sol.diag_times[g]);
    }
    return out;
  };

  // Integrate one row segment backward at step H given a stage-indexed RHS.
  auto march = [&](std::vector<MatrixXd>& row, double tau, std::size_t base_g,
                   std::size_t i_lo, std::size_t i_hi, auto&& rhs) {
    for (std::size_t i = i_hi; i-- > i_lo;) {
      const double t1 = tau + H * static_cast<double>(i + 1);
      const std::size_t g1 = base_g + 2 * (i + 1);
      const MatrixXd& y = row[i + 1];
      const MatrixXd k1 = rhs(g1, t1, y);
      const MatrixXd x2 = y - h2 * k1;
      const MatrixXd k2 = rhs(g1 - 1, t1 - h2, x2);
      const MatrixXd x3 = y - h2 * k2;
      const MatrixXd k3 = rhs(g1 - 1, t1 - h2, x3);
      const MatrixXd x4 = y - H * k3;
      const MatrixXd k4 = rhs(g1 - 2, t1 - H, x4);
      const MatrixXd next = y - (H / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      row[i] = 0.5 * (next + next.transpose());
    }
  };

  // ---------------------------------------------------------------- Lambda
  {
    std::vector<MatrixXd> gnode(N + 1, zdd);
    gnode[N] = sol.Lambda_rows[N][0];

    // Gain cache over the window, rebuilt from the current guess.
    std::vector<MatrixXd> Ui, SU;
    auto build_cache = [&](std::size_t ca, std::size_t cb,
                           const std::vector<MatrixXd>& nv) {
      const std::size_t ga = ca * cf, nf = cb * cf - ga;
      Ui.assign(nf + 1, MatrixXd());
      SU.assign(nf + 1, MatrixXd());
      for (std::size_t f = 0; f <= nf; ++f) {
        const std::size_t g = ga + f;
        const double t = sol.diag_times[g];
        MatrixXd Ld = guess_at(nv, ca, g);
        Ld = 0.5 * (Ld + Ld.transpose());
        const SolutionSlice sl{Ld, zdd, zd};
        const UWSZYBlock blk = uwszy(model, sl, t, t);
        Ui[f] = spd_inverse(blk.U, "U(t;t)", t);
        SU[f] = blk.S * Ui[f];
      }
    };
    auto integrate_rows = [&](std::size_t lo, std::size_t hi_excl, std::size_t ca,
                              std::size_t cb) {
      const std::size_t ga = ca * cf;
      for (std::size_t l = lo; l < hi_excl; ++l) {
        const double tau = sol.grid.node(l);
        const std::size_t base_g = l * cf;
        auto rhs = [&](std::size_t g, double t, const MatrixXd& L) -> MatrixXd {
          const SolutionSlice sl{L, zdd, zd};
          const UWSZYBlock blk = uwszy(model, sl, tau, t);
          const std::size_t f = g - ga;
          const MatrixXd D = model.D(t);
          const MatrixXd D0 = model.D0(t);
          const MatrixXd B = model.B(t);
          MatrixXd out = -(model.Q(tau, t) + D.transpose() * L * D +
                           D0.transpose() * L * D0 + L * B + B.transpose() * L +
                           SU[f] * blk.U * SU[f].transpose() -
                           blk.S * SU[f].transpose() - SU[f] * blk.S.transpose());
          return out;
        };
        march(sol.Lambda_rows[l], tau, base_g, (l >= ca) ? 0 : (ca - l) * sub,
              (cb - l) * sub, rhs);
      }
    };
    auto sweep = [&](std::size_t ca, std::size_t cb,
                     std::vector<MatrixXd>& nv) -> double {
      build_cache(ca, cb, nv);
      integrate_rows(ca, cb, ca, cb);
      double err = 0.0;
      for (std::size_t j = ca; j < cb; ++j) {
        const MatrixXd fresh = sol.Lambda_rows[j][0];
        err = std::max(err, (fresh - nv[j - ca]).cwiseAbs().maxCoeff());
        nv[j - ca] = fresh;
      }
      return err;
    };
    auto flush = [&](std::size_t ca, std::size_t cb, std::vector<MatrixXd>& nv) {
      build_cache(ca, cb, nv);
      integrate_rows(0, cb, ca, cb);
      for (std::size_t j = ca; j < cb; ++j) nv[j - ca] = sol.Lambda_rows[j][0];
    };
    sol.info.iterations_total += run_windowed(N, cpw, tol, max_iter, gnode, sweep, flush,
                                              sol.info.window_halved, sol.info.windows,
                                              "Lambda");
    densify(gnode, sol.Lambda_diag);
  }

  // ------------------------------------------------------------------ beta
  {
    std::vector<MatrixXd> gnode(N + 1, zdd);
    gnode[N] = sol.beta_rows[N][0];

    std::vector<MatrixXd> Wi, ZW;
    auto build_cache = [&](std::size_t ca, std::size_t cb,
                           const std::vector<MatrixXd>& nv) {
      const std::size_t ga = ca * cf, nf = cb * cf - ga;
      Wi.assign(nf + 1, MatrixXd());
      ZW.assign(nf + 1, MatrixXd());
      for (std::size_t f = 0; f <= nf; ++f) {
        const std::size_t g = ga + f;
        const double t = sol.diag_times[g];
        MatrixXd bd = guess_at(nv, ca, g);
        bd = 0.5 * (bd + bd.transpose());
        const SolutionSlice sl{sol.Lambda_diag[g], bd, zd};
        const UWSZYBlock blk = uwszy(model, sl, t, t);
        Wi[f] = spd_inverse(blk.W, "W(t;t)", t);
        ZW[f] = blk.Z * Wi[f];
      }
    };
    auto integrate_rows = [&](std::size_t lo, std::size_t hi_excl, std::size_t ca,
                              std::size_t cb) {
      const std::size_t ga = ca * cf;
      for (std::size_t l = lo; l < hi_excl; ++l) {
        const double tau = sol.grid.node(l);
        const std::size_t base_g = l * cf;
        auto rhs = [&](std::size_t g, double t, const MatrixXd& bta) -> MatrixXd {
          const double rpos = static_cast<double>(g - base_g) / 2.0;
          const SolutionSlice sl{detail::row_interp(sol.Lambda_rows[l], rpos), bta, zd};
          const UWSZYBlock blk = uwszy(model, sl, tau, t);
          const std::size_t f = g - ga;
          const MatrixXd Dh = model.D(t) + model.Dbar(t);
          const MatrixXd D0h = model.D0(t) + model.D0bar(t);
          const MatrixXd Bh = model.B(t) + model.Bbar(t);
          MatrixXd out = -(model.Q(tau, t) + model.Qbar(tau, t) +
                           Dh.transpose() * sl.Lambda * Dh +
                           D0h.transpose() * bta * D0h + bta * Bh +
                           Bh.transpose() * bta + ZW[f] * blk.W * ZW[f].transpose() -
                           blk.Z * ZW[f].transpose() - ZW[f] * blk.Z.transpose());
          return out;
        };
        march(sol.beta_rows[l], tau, base_g, (l >= ca) ? 0 : (ca - l) * sub,
              (cb - l) * sub, rhs);
      }
    };
    auto sweep = [&](std::size_t ca, std::size_t cb,
                     std::vector<MatrixXd>& nv) -> double {
      build_cache(ca, cb, nv);
      integrate_rows(ca, cb, ca, cb);
      double err = 0.0;
      for (std::size_t j = ca; j < cb; ++j) {
        const MatrixXd fresh = sol.beta_rows[j][0];
        err = std::max(err, (fresh - nv[j - ca]).cwiseAbs().maxCoeff());
        nv[j - ca] = fresh;
      }
      return err;
    };
    auto flush = [&](std::size_t ca, std::size_t cb, std::vector<MatrixXd>& nv) {
      build_cache(ca, cb, nv);
      integrate_rows(0, cb, ca, cb);
      for (std::size_t j = ca; j < cb; ++j) nv[j - ca] = sol.beta_rows[j][0];
    };
    int beta_windows = 0;
    sol.info.iterations_total += run_windowed(N, cpw, tol, max_iter, gnode, sweep, flush,
                                              sol.info.window_halved, beta_windows,
                                              "beta");
    densify(gnode, sol.beta_diag);
  }

  // ----------------------------------------------------------- gamma, kappa
  detail::gamma_pass(model, sol, tol, max_iter, window);
  detail::kappa_pass(model, sol);

  const detail::BoundConstants bc = detail::lambda_bound_constants(model, grid.nodes());
  double diag_sup = 0.0;
  for (const MatrixXd& L : sol.Lambda_diag) {
    diag_sup = std::max(diag_sup, detail::op_norm(L));
  }
  sol.info.diag_sup = diag_sup;
  sol.info.diag_bound = bc.limit;
  sol.info.bound_ok = true;
  if (pd.pass && mono.pass && !model.has_cross_terms()) {
    sol.info.bound_ok = diag_sup <= bc.limit * (1.0 + 1e-9) + 1e-12;
  }

  sol.finalize_checks(model);
  return sol;
}

}  // namespace mfeq
