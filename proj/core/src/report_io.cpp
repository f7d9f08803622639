#include "mfeq/report_io.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mfeq/errors.hpp"

namespace mfeq {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw ModelError("cannot open output file: " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw ModelError("write failed: " + path);
}

// 17 significant digits: doubles survive a round trip through the CSV.
std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void dump_json(const std::string& path, const json& j) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  finish(out, path);
}

json condition_json(const ConditionReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"pass", c.pass},
                      {"worst", c.worst},
                      {"at_tau", c.at_tau},
                      {"at_t", c.at_t}});
  }
  return {{"pass", report.pass}, {"delta", report.delta}, {"checks", checks}};
}

}  // namespace

std::string iso_timestamp_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_field_csv(const std::string& path, const RiccatiSolution& sol,
                     const std::string& field) {
  int which;
  if (field == "lambda")
    which = 0;
  else if (field == "beta")
    which = 1;
  else if (field == "gamma")
    which = 2;
  else if (field == "kappa")
    which = 3;
  else
    throw ModelError("unknown solution field: " + field);

  std::ofstream out = open_out(path);
  out << "tau,t,block,i,j,value\n";
  const std::size_t cells = sol.cells();
  for (std::size_t i = 0; i <= cells; ++i) {
    const double tau = sol.grid.node(i);
    const std::size_t len = sol.kappa_rows[i].size();
    for (std::size_t f = 0; f < len; ++f) {
      const double t = sol.row_times[sol.row_offset(i) + f];
      const std::string head = num(tau) + "," + num(t) + "," + field + ",";
      switch (which) {
        case 0: {
          const Eigen::MatrixXd& v = sol.Lambda_rows[i][f];
          for (Eigen::Index r = 0; r < v.rows(); ++r)
            for (Eigen::Index c = 0; c < v.cols(); ++c)
              out << head << r << "," << c << "," << num(v(r, c)) << "\n";
          break;
        }
        case 1: {
          const Eigen::MatrixXd& v = sol.beta_rows[i][f];
          for (Eigen::Index r = 0; r < v.rows(); ++r)
            for (Eigen::Index c = 0; c < v.cols(); ++c)
              out << head << r << "," << c << "," << num(v(r, c)) << "\n";
          break;
        }
        case 2: {
          const Eigen::VectorXd& v = sol.gamma_rows[i][f];
          for (Eigen::Index r = 0; r < v.size(); ++r)
            out << head << r << "," << 0 << "," << num(v(r)) << "\n";
          break;
        }
        case 3:
          out << head << 0 << "," << 0 << "," << num(sol.kappa_rows[i][f]) << "\n";
          break;
      }
    }
  }
  finish(out, path);
}

void write_solution_csvs(const std::string& dir, const RiccatiSolution& sol) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const std::filesystem::path base(dir);
  for (const char* field : {"lambda", "beta", "gamma", "kappa"})
    write_field_csv((base / (std::string(field) + ".csv")).string(), sol, field);
}

void write_riccati_report(const std::string& path, const RiccatiSolution& sol,
                          const Residuals& residuals, const ConditionReport& pd,
                          const ConditionReport& monotonicity) {
  const SolverInfo& info = sol.info;
  json j{{"generated_at", iso_timestamp_now()},
         {"method", info.method},
         {"N", info.N},
         {"substeps", info.substeps},
         {"horizon", sol.grid.horizon()},
         {"iterations",
          {{"total", info.iterations_total},
           {"windows", info.windows},
           {"window_halved", info.window_halved},
           {"gamma_total", info.gamma_iterations},
           {"gamma_windows", info.gamma_windows}}},
         {"conditions",
          {{"pd", condition_json(pd)},
           {"monotonicity", condition_json(monotonicity)},
           {"pd_pass_strict", info.pd_pass},
           {"mono_pass", info.mono_pass},
           {"outside_scope", info.outside_scope}}},
         {"residuals",
          {{"lambda", residuals.rLambda},
           {"beta", residuals.rbeta},
           {"gamma", residuals.rgamma},
           {"kappa", residuals.rkappa}}},
         {"bound",
          {{"diag_sup", info.diag_sup}, {"diag_bound", info.diag_bound}, {"ok", info.bound_ok}}},
         {"symmetry_defect", info.symmetry_defect}};
  if (info.advisory_checked) {
    j["advisory"] = {{"k", info.advisory_k},
                     {"limit", info.advisory_limit},
                     {"ok", info.advisory_ok},
                     {"iterate_bound", info.iterate_bound},
                     {"iterate_sup", info.iterate_sup}};
  }
  dump_json(path, j);
}

void write_gamma_scan(const std::string& path, const std::vector<GammaScanRow>& rows) {
  std::ofstream out = open_out(path);
  out << "t,perturbation_id,gamma,analytic_min_check\n";
  for (const auto& row : rows) {
    out << num(row.t) << "," << row.perturbation_id << "," << num(row.gamma) << ","
        << num(row.analytic_min_check) << "\n";
  }
  finish(out, path);
}

void write_paths_csv(const std::string& path, const ParticleEnsemble& ens) {
  std::ofstream out = open_out(path);
  out << "path,particle";
  out << ",t";
  for (Eigen::Index r = 0; r < ens.d; ++r) out << ",x_" << r;
  out << "\n";
  const bool have_snaps = !ens.snapshot_steps.empty();
  for (std::size_t j = 0; j < ens.M; ++j) {
    if (have_snaps) {
      for (std::size_t si = 0; si < ens.snapshot_steps.size(); ++si) {
        const double t = ens.times[ens.snapshot_steps[si]];
        const Eigen::MatrixXd& X = ens.snapshots[j][si];
        for (Eigen::Index i = 0; i < X.cols(); ++i) {
          out << j << "," << i << "," << num(t);
          for (Eigen::Index r = 0; r < X.rows(); ++r) out << "," << num(X(r, i));
          out << "\n";
        }
      }
    } else {
      const Eigen::MatrixXd& X = ens.terminal_states[j];
      for (Eigen::Index i = 0; i < X.cols(); ++i) {
        out << j << "," << i << "," << num(ens.T);
        for (Eigen::Index r = 0; r < X.rows(); ++r) out << "," << num(X(r, i));
        out << "\n";
      }
    }
  }
  finish(out, path);
}

void write_cost_json(const std::string& path, const CostEstimate& est,
                     const ParticleEnsemble& ens, double tau) {
  const json j{{"generated_at", iso_timestamp_now()},
               {"mean", est.mean},
               {"stderr", est.std_error},
               {"tau", tau},
               {"t0", ens.t0},
               {"N", ens.N},
               {"M", ens.M},
               {"dt", ens.dt},
               {"seed", ens.seed}};
  dump_json(path, j);
}

void write_delta_report(const std::string& path, const DeltaReport& r) {
  json probes = json::array();
  for (const auto& p : r.probes)
    probes.push_back({{"eps", p.eps}, {"estimate", p.estimate}, {"stderr", p.std_error}});
  json mean = json::array();
  for (Eigen::Index i = 0; i < r.moments.mean.size(); ++i) mean.push_back(r.moments.mean(i));
  json cov = json::array();
  for (Eigen::Index i = 0; i < r.moments.cov.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < r.moments.cov.cols(); ++c) row.push_back(r.moments.cov(i, c));
    cov.push_back(row);
  }
  const json j{{"generated_at", iso_timestamp_now()},
               {"t", r.t},
               {"perturbation_id", r.perturbation_id},
               {"moments", {{"mean", mean}, {"cov", cov}}},
               {"probes", probes},
               {"richardson", r.richardson},
               {"richardson_stderr", r.richardson_std_error},
               {"analytic_gamma", r.analytic_gamma},
               {"base_cost", r.base_cost},
               {"base_cost_stderr", r.base_cost_std_error},
               {"value_ansatz", r.value_ansatz},
               {"equilibrium_probe", r.equilibrium_probe},
               {"checks",
                {{"value", r.pass_value},
                 {"zero", r.pass_zero},
                 {"match", r.pass_match},
                 {"sign", r.pass_sign}}},
               {"pass", r.pass},
               {"N", r.N},
               {"M", r.M},
               {"dt", r.dt},
               {"seed", r.seed}};
  dump_json(path, j);
}

void write_error_json(const std::string& path, const std::string& error_class,
                      const std::string& message) {
  dump_json(path, json{{"generated_at", iso_timestamp_now()},
                       {"error", error_class},
                       {"message", message}});
}

}  // namespace mfeq
