#include "mfeq/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "mfeq/errors.hpp"
#include "mfeq/rng.hpp"

namespace mfeq {

namespace {

struct PairedStats {
  double mean = 0.0;
  double std_error = 0.0;
};

PairedStats stats(const std::vector<double>& values) {
  PairedStats out;
  const auto n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std_error = std::sqrt(ss / (n * (n - 1.0)));
  }
  return out;
}

}  // namespace

std::vector<double> snap_eps_ladder(std::vector<double> eps_list, double t, double T,
                                    double dt) {
  if (eps_list.empty()) {
    for (double f : {0.2, 0.1, 0.05, 0.025}) eps_list.push_back(f * (T - t));
  }
  std::vector<double> snapped;
  for (double eps : eps_list) {
    if (!(eps > 0.0)) throw ModelError("delta probe: eps must be positive");
    const double clipped = std::min(eps, T - t);
    const auto k = static_cast<std::size_t>(std::llround(std::max(1.0, clipped / dt)));
    snapped.push_back(static_cast<double>(k) * dt);
  }
  std::sort(snapped.begin(), snapped.end(), std::greater<double>());
  snapped.erase(std::unique(snapped.begin(), snapped.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-15; }),
                snapped.end());
  if (snapped.size() < 2)
    throw ModelError("delta probe: need at least two distinct eps values after snapping to dt");
  if (snapped.front() > T - t + 1e-12)
    throw ModelError("delta probe: eps exceeds the remaining horizon");
  return snapped;
}

DeltaReport assemble_delta_report(const std::vector<double>& eps, const CostEstimate& base,
                                  const std::vector<CostEstimate>& spiked,
                                  double analytic_gamma, double value_ansatz,
                                  bool equilibrium_probe) {
  if (spiked.size() != eps.size() || eps.size() < 2)
    throw ModelError("delta report: need one spiked run per eps, at least two");
  const std::size_t M = base.per_path.size();

  DeltaReport report;
  report.analytic_gamma = analytic_gamma;
  report.base_cost = base.mean;
  report.base_cost_std_error = base.std_error;
  report.value_ansatz = value_ansatz;
  report.equilibrium_probe = equilibrium_probe;
  report.pass_value = std::abs(base.mean - value_ansatz) <= 3.0 * base.std_error;

  std::vector<std::vector<double>> per_path_deltas;
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (spiked[k].per_path.size() != M)
      throw ModelError("delta report: spiked run has a different path count");
    std::vector<double> deltas(M);
    for (std::size_t j = 0; j < M; ++j)
      deltas[j] = (spiked[k].per_path[j] - base.per_path[j]) / eps[k];
    const PairedStats st = stats(deltas);
    report.probes.push_back({eps[k], st.mean, st.std_error});
    per_path_deltas.push_back(std::move(deltas));
  }

  // Two-point Richardson extrapolation in eps over the smallest pair, applied
  // path by path so the standard error reflects the extrapolated estimator.
  const std::size_t last = eps.size() - 1;
  const double e1 = eps[last - 1], e2 = eps[last];
  std::vector<double> rich(M);
  for (std::size_t j = 0; j < M; ++j)
    rich[j] = (e1 * per_path_deltas[last][j] - e2 * per_path_deltas[last - 1][j]) / (e1 - e2);
  const PairedStats rs = stats(rich);
  report.richardson = rs.mean;
  report.richardson_std_error = rs.std_error;

  const double three_sigma = 3.0 * report.richardson_std_error;
  report.pass_zero = std::abs(report.richardson) <= three_sigma;
  report.pass_match = std::abs(report.richardson - report.analytic_gamma) <= three_sigma;
  // The sign requirement only binds when the analytic gap clears the Monte
  // Carlo noise floor; below it, positivity cannot be resolved at 3 sigma.
  report.pass_sign = report.analytic_gamma <= three_sigma || report.richardson > three_sigma;
  report.pass = report.pass_value && (report.equilibrium_probe
                                          ? report.pass_zero
                                          : (report.pass_match && report.pass_sign));
  return report;
}

DeltaReport estimate_delta(const LQModel& model, const RiccatiSolution& sol,
                           const AffinePerturbation& v, double t, const InitialLaw& init,
                           std::vector<double> eps_list, std::size_t N, std::size_t M,
                           double dt, std::uint64_t seed, int threads,
                           std::string perturbation_id) {
  const MeasureMoments moments = init.moments();
  const double analytic_gamma = gamma(model, sol, t, moments, v);
  const AffinePerturbation eq = equilibrium_affine(model, sol, t, moments);
  const double eq_scale = 1.0 + eq.A.norm() + eq.c.norm();
  const bool equilibrium_probe =
      (v.A - eq.A).norm() + (v.c - eq.c).norm() <= 1e-9 * eq_scale;

  const std::vector<double> eps = snap_eps_ladder(std::move(eps_list), t, model.T, dt);

  SimOptions opts;
  opts.threads = threads;
  const StrategySpec base = StrategySpec::lq_feedback(FeedbackStrategy::from_solution(model, sol));
  const CostSpec cost = CostSpec::lq_at(model, t);

  const ParticleEnsemble base_ens = simulate(model, base, init, t, N, M, dt, seed, opts);
  const CostEstimate base_cost = estimate_cost(base_ens, cost);

  const StrategySpec v_spec = StrategySpec::affine_override(v);
  std::vector<CostEstimate> spiked_costs;
  for (double e : eps) {
    const StrategySpec spiked = spike(base, v_spec, t, e, model.T);
    const ParticleEnsemble ens = simulate(model, spiked, init, t, N, M, dt, seed, opts);
    spiked_costs.push_back(estimate_cost(ens, cost));
  }

  DeltaReport report = assemble_delta_report(eps, base_cost, spiked_costs, analytic_gamma,
                                             value(sol, t, t, moments), equilibrium_probe);
  report.t = t;
  report.perturbation_id = std::move(perturbation_id);
  report.moments = moments;
  report.N = N;
  report.M = M;
  report.dt = dt;
  report.seed = seed;
  return report;
}

CertificateReport equilibrium_certificate(const LQModel& model, const RiccatiSolution& sol,
                                          const std::vector<double>& t_grid,
                                          const std::vector<MeasureMoments>& moments_samples,
                                          std::size_t perturbation_count, double tol,
                                          std::uint64_t seed) {
  if (t_grid.empty() || moments_samples.empty())
    throw ModelError("certificate: need at least one probe time and one moment sample");
  const Eigen::Index d = model.dims.d;
  const Eigen::Index m = model.dims.m;

  CertificateReport report;
  report.tol = tol;
  report.min_gamma = std::numeric_limits<double>::infinity();
  report.max_eq_gamma = 0.0;

  std::vector<double> draw(static_cast<std::size_t>(m * d + m));
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    const double t = t_grid[ti];
    CertificateProbe probe;
    probe.t = t;
    probe.min_gamma = std::numeric_limits<double>::infinity();
    for (std::size_t mi = 0; mi < moments_samples.size(); ++mi) {
      const MeasureMoments& mom = moments_samples[mi];
      const AffinePerturbation eq = equilibrium_affine(model, sol, t, mom);
      const double g_eq = gamma(model, sol, t, mom, eq);
      probe.gamma_at_eq = std::max(probe.gamma_at_eq, std::abs(g_eq));
      for (std::size_t p = 0; p < perturbation_count; ++p) {
        rng::normals(seed, 3, ti, mi, p, draw.data(), draw.size());
        AffinePerturbation v;
        v.A = Eigen::Map<const Eigen::MatrixXd>(draw.data(), m, d);
        v.c = Eigen::Map<const Eigen::VectorXd>(draw.data() + m * d, m);
        const double g = gamma(model, sol, t, mom, v);
        probe.min_gamma = std::min(probe.min_gamma, g);
        report.samples.push_back({t, mi, p, g, g_eq});
      }
    }
    report.min_gamma = std::min(report.min_gamma, probe.min_gamma);
    report.max_eq_gamma = std::max(report.max_eq_gamma, probe.gamma_at_eq);
    report.probes.push_back(probe);
  }
  report.pass = report.min_gamma >= -tol && report.max_eq_gamma <= tol;
  return report;
}

}  // namespace mfeq
