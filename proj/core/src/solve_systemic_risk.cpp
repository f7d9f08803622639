#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mfeq/riccati.hpp"
#include "riccati_detail.hpp"

namespace mfeq {

using Eigen::MatrixXd;

namespace {

// Lagrange interpolation on a uniform grid x0 + i*dx, using up to `pts`
// stencil nodes drawn from the index window [lo, hi].  The stencil is
// clamped to the window, so stale entries outside it are never touched.
double lagrange_uniform(const std::vector<double>& v, std::size_t lo, std::size_t hi,
                        double x0, double dx, double x, int pts) {
  const auto avail = static_cast<int>(hi - lo + 1);
  pts = std::min(pts, avail);
  const double s = (x - x0) / dx;
  long long base = static_cast<long long>(std::llround(std::floor(s))) -
                   (static_cast<long long>(pts) / 2 - 1);
  base = std::clamp(base, static_cast<long long>(lo),
                    static_cast<long long>(hi) - (pts - 1));
  double out = 0.0;
  for (int j = 0; j < pts; ++j) {
    double w = 1.0;
    const double xj = static_cast<double>(base + j);
    for (int m = 0; m < pts; ++m) {
      if (m == j) continue;
      const double xm = static_cast<double>(base + m);
      w *= (s - xm) / (xj - xm);
    }
    out += w * v[static_cast<std::size_t>(base + j)];
  }
  return out;
}

}  // namespace

// Scalar non-local Riccati solver of the inter-bank model.  The equation is
// integrated in the shifted unknown Lt(tau;t) = Lambda(tau;t) +
// (q/2)lambda(t-tau), whose equation reads
//   Lt' - 2k Lt + 2 lambda(t-tau) Lt(t;t)^2 - 4 Lt(tau;t) Lt(t;t)
//      + (eta/2 + k q) lambda(t-tau) - (q/2) lambda'(t-tau) = 0,
//   Lt(tau;T) = ((c+q)/2) lambda(T-tau),
// and whose Picard map (freeze the whole field in the nonlinear terms, solve
// the resulting decoupled linear rows) is contractive on short windows when
// the mean-reversion rate dominates the constant assembled below.
RiccatiSolution solve_systemic_risk(const SystemicRiskParams& p, std::size_t N,
                                    double tol, int max_iter, int substeps) {
  if (!(p.T > 0.0)) throw ModelError("horizon must be positive");
  if (N < 2) throw ModelError("partition count N must be at least 2");
  if (substeps < 2) throw ModelError("substeps must be at least 2");
  if (p.k < 0.0) throw ModelError("mean-reversion rate k must be non-negative");
  if (p.rho < 0.0 || p.rho > 1.0) throw ModelError("rho must lie in [0, 1]");
  if (std::abs(p.lambda(0.0) - 1.0) > 1e-12) {
    throw ModelError("discount function must satisfy lambda(0) = 1");
  }
  for (int i = 0; i <= 64; ++i) {
    if (!(p.lambda(p.T * i / 64.0) > 0.0)) {
      throw ModelError("discount function must be positive on [0, T]");
    }
  }

  const TriangularGrid grid = TriangularGrid::uniform(N, p.T);
  RiccatiSolution sol;
  detail::alloc_storage(sol, 1, grid, substeps);
  sol.info.method = "systemic-risk";
  sol.info.N = N;
  sol.info.substeps = substeps;
  sol.info.outside_scope = true;  // cross terms M, Mbar are nonzero here
  sol.info.pd_pass = true;
  sol.info.mono_pass = true;

  // Largeness advisory, assembled exactly from the contraction constants.
  const double nl = p.lambda.sup_abs(p.T);
  const double nld = p.lambda.sup_abs_derivative(p.T);
  const double nli = p.lambda.sup_abs_inverse(p.T);
  const double C1 = 0.5 * (p.c + p.q) * nl;
  const double C2 = std::max(nli, nl);
  const double C3 = 0.5 * p.eta * nl + 0.5 * p.q * nld;
  const double C4 = p.q * nl;
  const double C = std::max(C1 + 0.5 * C3 + 0.5 * C4, 4.0 * C2);
  sol.info.advisory_checked = true;
  sol.info.advisory_k = p.k;
  sol.info.advisory_limit = std::max(4.0 * C * C, 1.0);
  sol.info.advisory_ok = p.k > sol.info.advisory_limit;
  sol.info.iterate_bound = 2.0 * C;

  const std::size_t sub = static_cast<std::size_t>(substeps);
  const std::size_t cf = 2 * sub;
  const double cell = p.T / static_cast<double>(N);
  const double H = cell / static_cast<double>(sub);
  const double h2 = 0.5 * H;

  // Shifted-field iterate: rows at step H, diagonal at step H/2.
  std::vector<std::vector<double>> trow(N + 1);
  for (std::size_t l = 0; l <= N; ++l) {
    trow[l].assign((N - l) * sub + 1, 0.0);
    trow[l].back() = 0.5 * (p.c + p.q) * p.lambda(p.T - grid.node(l));
  }
  std::vector<double> tdiag(N * cf + 1, 0.0);
  tdiag.back() = 0.5 * (p.c + p.q);

  std::size_t cpw =
      static_cast<std::size_t>(std::max<long long>(1, std::llround(0.1 * N)));
  cpw = std::min(cpw, N);

  int total_iters = 0;
  double iterate_sup = 0.0;
  bool solved = false;
  int windows_out = 0;

  for (int attempt = 0; attempt < 2 && !solved; ++attempt) {
    bool ok = true;
    int windows = 0;
    std::size_t cb = N;
    while (cb > 0) {
      const std::size_t ca = cb > cpw ? cb - cpw : 0;
      const std::size_t ga = ca * cf;
      const std::size_t gb = cb * cf;
      // Extra locked nodes on the right give the interpolation stencils
      // two-sided data everywhere except at the window's left edge.
      const std::size_t rend = std::min(N, cb + 3);

      // Seed the window region by constant continuation from its right edge.
      for (std::size_t l = 0; l < cb; ++l) {
        const std::size_t i_hi = (cb - l) * sub;
        const std::size_t i_lo = (l >= ca) ? 0 : (ca - l) * sub;
        for (std::size_t i = i_lo; i < i_hi; ++i) trow[l][i] = trow[l][i_hi];
      }

      std::vector<std::vector<double>> oldrow(cb);
      std::vector<double> vd(gb - ga + 1, 0.0);
      std::vector<double> nv(rend - ca + 1, 0.0);

      bool converged = false;
      for (int iter = 0; iter < max_iter; ++iter) {
        ++total_iters;
        for (std::size_t l = 0; l < cb; ++l) oldrow[l] = trow[l];

        // Diagonal of the frozen field at half-step resolution.
        for (std::size_t j = ca; j <= rend; ++j) nv[j - ca] = trow[j][0];
        for (std::size_t g = ga; g <= gb; ++g) {
          if (g % cf == 0) {
            vd[g - ga] = nv[g / cf - ca];
          } else {
            vd[g - ga] = lagrange_uniform(nv, 0, rend - ca, grid.node(ca), cell,
                                          sol.diag_times[g], 6);
          }
        }

        double err = 0.0;
        for (std::size_t l = 0; l < cb; ++l) {
          const double tau = grid.node(l);
          const std::size_t base_g = l * cf;
          const std::size_t i_hi = (cb - l) * sub;
          const std::size_t i_lo = (l >= ca) ? 0 : (ca - l) * sub;
          const std::vector<double>& prev = oldrow[l];
          auto rhs = [&](std::size_t g, double t, double y) -> double {
            const double u = t - tau;
            const double lam = p.lambda(u);
            const double lamd = p.lambda.derivative(u);
            const double vdg = vd[g - ga];
            double vrow;
            const std::size_t off = g - base_g;
            if (off % 2 == 0) {
              vrow = prev[off / 2];
            } else {
              // Entries of prev below i_lo are stale seeds; keep the stencil
              // on the window's own iterate and the locked region above it.
              vrow = lagrange_uniform(prev, i_lo, prev.size() - 1, tau, H, t, 6);
            }
            const double src = 2.0 * lam * vdg * vdg - 4.0 * vrow * vdg +
                               (0.5 * p.eta + p.k * p.q) * lam - 0.5 * p.q * lamd;
            return 2.0 * p.k * y - src;
          };
          for (std::size_t i = i_hi; i-- > i_lo;) {
            const double t1 = tau + H * static_cast<double>(i + 1);
            const std::size_t g1 = base_g + 2 * (i + 1);
            const double y = trow[l][i + 1];
            const double k1 = rhs(g1, t1, y);
            const double k2 = rhs(g1 - 1, t1 - h2, y - h2 * k1);
            const double k3 = rhs(g1 - 1, t1 - h2, y - h2 * k2);
            const double k4 = rhs(g1 - 2, t1 - H, y - H * k3);
            const double next = y - (H / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            trow[l][i] = next;
            err = std::max(err, std::abs(next - prev[i]));
            iterate_sup = std::max(iterate_sup, std::abs(next));
          }
        }
        if (!std::isfinite(err)) break;
        if (err <= tol) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        ok = false;
        break;
      }

      // Lock the window diagonal.
      for (std::size_t j = ca; j <= rend; ++j) nv[j - ca] = trow[j][0];
      for (std::size_t g = ga; g < gb; ++g) {
        if (g % cf == 0) {
          tdiag[g] = nv[g / cf - ca];
        } else {
          tdiag[g] = lagrange_uniform(nv, 0, rend - ca, grid.node(ca), cell,
                                      sol.diag_times[g], 6);
        }
      }
      ++windows;
      cb = ca;
    }
    if (ok) {
      solved = true;
      windows_out = windows;
    } else if (attempt == 0) {
      cpw = std::max<std::size_t>(1, cpw / 2);
      sol.info.window_halved = true;
    }
  }
  if (!solved) {
    throw NotConverged("systemic-risk fixed point did not converge, window halving exhausted");
  }
  sol.info.iterations_total = total_iters;
  sol.info.windows = windows_out;
  sol.info.iterate_sup = iterate_sup;
  sol.info.diag_sup = iterate_sup;
  sol.info.diag_bound = sol.info.iterate_bound;
  sol.info.bound_ok = !sol.info.advisory_ok || iterate_sup <= 2.0 * C * (1.0 + 1e-9);
  sol.info.symmetry_defect = 0.0;

  // Undo the shift: Lambda(tau;t) = Lt(tau;t) - (q/2) lambda(t-tau).
  for (std::size_t l = 0; l <= N; ++l) {
    for (std::size_t i = 0; i < trow[l].size(); ++i) {
      const double lam = p.lambda(H * static_cast<double>(i));
      sol.Lambda_rows[l][i] = MatrixXd::Constant(1, 1, trow[l][i] - 0.5 * p.q * lam);
    }
  }
  for (std::size_t g = 0; g < tdiag.size(); ++g) {
    sol.Lambda_diag[g] = MatrixXd::Constant(1, 1, tdiag[g] - 0.5 * p.q);
  }
  // beta and gamma vanish identically for this model; storage is already zero.

  // kappa(tau;t) = sigma^2 (1-rho^2) * integral of Lambda(tau;s) over [t,T].
  const double vol2 = p.sigma * p.sigma * (1.0 - p.rho * p.rho);
  for (std::size_t l = 0; l < N; ++l) {
    auto& row = sol.kappa_rows[l];
    const std::size_t steps = (N - l) * sub;
    auto lam_row = [&](double pos) -> double {
      const double lam = p.lambda(H * pos);
      const double lt = lagrange_uniform(trow[l], 0, trow[l].size() - 1, grid.node(l), H,
                                         grid.node(l) + H * pos, 6);
      return lt - 0.5 * p.q * lam;
    };
    row[steps] = 0.0;
    for (std::size_t i = steps; i-- > 0;) {
      const double f0 = trow[l][i] - 0.5 * p.q * p.lambda(H * static_cast<double>(i));
      const double f1 =
          trow[l][i + 1] - 0.5 * p.q * p.lambda(H * static_cast<double>(i + 1));
      const double fm = lam_row(static_cast<double>(i) + 0.5);
      row[i] = row[i + 1] + vol2 * (H / 6.0) * (f0 + 4.0 * fm + f1);
    }
  }

  return sol;
}

}  // namespace mfeq
