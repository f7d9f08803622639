#ifndef MFEQ_REPORT_IO_HPP
#define MFEQ_REPORT_IO_HPP

#include <string>
#include <vector>

#include "mfeq/model.hpp"
#include "mfeq/riccati.hpp"
#include "mfeq/simulate.hpp"
#include "mfeq/verifier.hpp"

namespace mfeq {

/// UTC wall-clock time, ISO-8601 (e.g. 2024-05-01T12:30:00Z).  Every JSON
/// artifact carries exactly one "generated_at" key holding this value; all
/// other bytes are deterministic functions of the inputs.
std::string iso_timestamp_now();

/// One stored solution field as CSV with columns tau,t,block,i,j,value
/// (17 significant digits).  `field` is one of lambda, beta, gamma, kappa.
void write_field_csv(const std::string& path, const RiccatiSolution& sol,
                     const std::string& field);

/// lambda.csv, beta.csv, gamma.csv, kappa.csv under `dir` (created if needed).
void write_solution_csvs(const std::string& dir, const RiccatiSolution& sol);

/// Solver provenance, condition checks, residual maxima, and bound info.
void write_riccati_report(const std::string& path, const RiccatiSolution& sol,
                          const Residuals& residuals, const ConditionReport& pd,
                          const ConditionReport& monotonicity);

struct GammaScanRow {
  double t = 0.0;
  std::string perturbation_id;
  double gamma = 0.0;
  double analytic_min_check = 0.0;  // gap at the equilibrium feedback itself
};

/// CSV with columns t,perturbation_id,gamma,analytic_min_check.
void write_gamma_scan(const std::string& path, const std::vector<GammaScanRow>& rows);

/// Particle snapshots as CSV with columns path,particle,t,x_0..x_{d-1}.
/// Falls back to the terminal states when no snapshots were recorded.
void write_paths_csv(const std::string& path, const ParticleEnsemble& ensemble);

/// Monte Carlo cost estimate with the run parameters.
void write_cost_json(const std::string& path, const CostEstimate& estimate,
                     const ParticleEnsemble& ensemble, double tau);

void write_delta_report(const std::string& path, const DeltaReport& report);

/// {"error": class, "message": ..., "generated_at": ...}; written next to the
/// artifacts when a run fails for numerical reasons.
void write_error_json(const std::string& path, const std::string& error_class,
                      const std::string& message);

}  // namespace mfeq

#endif  // MFEQ_REPORT_IO_HPP
