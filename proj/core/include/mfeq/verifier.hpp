#ifndef MFEQ_VERIFIER_HPP
#define MFEQ_VERIFIER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mfeq/equilibrium.hpp"
#include "mfeq/riccati.hpp"
#include "mfeq/simulate.hpp"

namespace mfeq {

/// One finite-difference probe of the spiked-cost derivative at a given eps.
struct DeltaProbe {
  double eps = 0.0;
  double estimate = 0.0;   // mean over common-noise paths of (J_spiked - J_base)/eps
  double std_error = 0.0;  // paired (common random numbers), across paths
};

/// Monte Carlo estimate of Delta(t, v) = lim (J(spike) - J(base))/eps compared
/// against the analytic first-order gap Gamma(t, v).
struct DeltaReport {
  double t = 0.0;
  std::string perturbation_id;
  MeasureMoments moments;

  std::vector<DeltaProbe> probes;  // eps strictly decreasing
  double richardson = 0.0;         // two-point extrapolation over the smallest eps pair
  double richardson_std_error = 0.0;
  double analytic_gamma = 0.0;

  double base_cost = 0.0;  // simulated J under the candidate equilibrium
  double base_cost_std_error = 0.0;
  double value_ansatz = 0.0;  // V(t; t, moments) from the solved field

  bool equilibrium_probe = false;  // v coincides with the equilibrium feedback
  bool pass_value = false;         // base cost matches the ansatz within 3 sigma
  bool pass_zero = false;          // equilibrium probe: |Delta| <= 3 sigma
  bool pass_match = false;         // |Delta - Gamma| <= 3 sigma
  bool pass_sign = false;          // Delta positive beyond 3 sigma when Gamma clears it
  bool pass = false;

  std::size_t N = 0, M = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
};

/// Estimates Delta(t, v) for the affine perturbation v played on [t, t+eps)
/// against the equilibrium feedback of `sol`, over the eps ladder (defaults
/// to {0.2, 0.1, 0.05, 0.025} (T - t), snapped to step multiples).  All
/// simulations share the seed, so differences are paired path by path.
DeltaReport estimate_delta(const LQModel& model, const RiccatiSolution& sol,
                           const AffinePerturbation& v, double t, const InitialLaw& init,
                           std::vector<double> eps_list, std::size_t N, std::size_t M,
                           double dt, std::uint64_t seed, int threads = 0,
                           std::string perturbation_id = {});

/// Snaps an eps ladder to whole-step multiples of dt (spike windows switch at
/// step boundaries), clips to the remaining horizon, and returns it strictly
/// decreasing.  An empty request yields {0.2, 0.1, 0.05, 0.025} (T - t).
std::vector<double> snap_eps_ladder(std::vector<double> eps_list, double t, double T,
                                    double dt);

/// Assembles probes, the path-paired Richardson extrapolation, and the pass
/// flags from per-path costs of the base run and one spiked run per eps
/// (matching order; all runs share the seed).  Fields t, perturbation_id,
/// moments, N, M, dt, seed are left to the caller.
DeltaReport assemble_delta_report(const std::vector<double>& eps, const CostEstimate& base,
                                  const std::vector<CostEstimate>& spiked,
                                  double analytic_gamma, double value_ansatz,
                                  bool equilibrium_probe);

/// Analytic certificate at one probe time: the smallest first-order gap over
/// the sampled perturbations and the gap at the equilibrium itself.
struct CertificateProbe {
  double t = 0.0;
  double min_gamma = 0.0;
  double gamma_at_eq = 0.0;  // largest |Gamma(equilibrium)| over the moment samples
};

struct CertificateReport {
  /// One evaluated perturbation: Gamma for the sampled v, and the gap at the
  /// equilibrium feedback under the same (t, moments).
  struct Sample {
    double t = 0.0;
    std::size_t moment_index = 0;
    std::size_t perturbation_index = 0;
    double gamma = 0.0;
    double gamma_at_eq = 0.0;
  };

  std::vector<CertificateProbe> probes;
  std::vector<Sample> samples;
  double min_gamma = 0.0;
  double max_eq_gamma = 0.0;
  double tol = 0.0;
  bool pass = false;
};

/// Sweeps Gamma(t, v) over a grid of times, measure moments, and random
/// affine perturbations (drawn from the certificate stream of `seed`); the
/// certificate passes when every gap is >= -tol and the gap at the
/// equilibrium feedback stays within tol of zero.
CertificateReport equilibrium_certificate(const LQModel& model, const RiccatiSolution& sol,
                                          const std::vector<double>& t_grid,
                                          const std::vector<MeasureMoments>& moments_samples,
                                          std::size_t perturbation_count, double tol,
                                          std::uint64_t seed);

}  // namespace mfeq

#endif  // MFEQ_VERIFIER_HPP
