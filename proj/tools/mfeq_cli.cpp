// mfeq command line driver.
//
// Subcommands:
//   solve      solve the non-local Riccati system and write field tables
//   residuals  solve and write pointwise residual diagnostics
//   simulate   run the interacting-particle system under the equilibrium feedback
//   verify     check the equilibrium property (analytic certificate + Monte Carlo probe)
//   example    run a bundled example with its known reference solution
//
// Exit codes: 0 success (verification passed), 1 verification gate failed,
// 2 invalid input, 3 numerical failure. Failures also leave an error.json
// in the output directory.

#include <CLI11.hpp>
#include <json.hpp>

#include <mfeq/equilibrium.hpp>
#include <mfeq/errors.hpp>
#include <mfeq/examples.hpp>
#include <mfeq/model.hpp>
#include <mfeq/model_io.hpp>
#include <mfeq/report_io.hpp>
#include <mfeq/riccati.hpp>
#include <mfeq/simulate.hpp>
#include <mfeq/verifier.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <variant>
#include <vector>

namespace {

using namespace mfeq;
namespace fs = std::filesystem;

struct Options {
  std::string model_path;
  std::string out = "mfeq-out";

  // Solver controls.
  std::string method = "partition";
  std::size_t grid = 100;
  int substeps = 4;
  double tol = 1e-10;
  int max_iter = 200;
  double window = -1.0;

  // Simulation controls. One seed governs every random draw.
  std::size_t particles = 5000;
  std::size_t paths = 16;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  double t0 = 0.0;
  int threads = 0;
  std::size_t snapshot_every = 0;
  std::size_t snapshot_particles = 50;

  // Verification controls.
  std::vector<double> eps;
  std::size_t perturbations = 100;
  double cert_tol = 1e-8;
  bool probe_equilibrium = false;
  double probe_offset = 0.5;

  // Initial law overrides.
  std::string init_kind;
  std::vector<double> init_mean;
  std::vector<double> init_var;

  // Example selection.
  std::string example_name;
  std::string params_path;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

RiccatiSolution solve_lq(const LQModel& model, const Options& o) {
  if (o.method == "partition") {
    return solve_partition(model, o.grid, o.substeps);
  }
  if (o.method == "fixed-point") {
    return solve_fixed_point(model, TriangularGrid::uniform(o.grid, model.T), o.tol,
                             o.max_iter, o.window, o.substeps);
  }
  throw ModelError("unknown --method '" + o.method + "' (expected partition or fixed-point)");
}

std::size_t residual_stride(const Options& o) {
  return std::max<std::size_t>(1, o.grid / 100);
}

void check_dt(const Options& o, double horizon) {
  if (o.t0 < 0.0 || o.t0 >= horizon) {
    throw ModelError("--t0 must lie in [0, T)");
  }
  const double span = horizon - o.t0;
  if (o.dt <= 0.0 || o.dt > span / 10.0 + 1e-15) {
    throw ModelError("--dt must be positive and at most (T - t0)/10 = " + fmt(span / 10.0));
  }
}

InitialLaw make_init(const Options& o, Eigen::Index d, bool nonlq) {
  std::string kind = o.init_kind;
  if (kind.empty()) {
    kind = nonlq ? "lognormal" : "gaussian";
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  if (!o.init_mean.empty()) {
    if (o.init_mean.size() == 1) {
      mean.setConstant(o.init_mean[0]);
    } else if (static_cast<Eigen::Index>(o.init_mean.size()) == d) {
      for (Eigen::Index i = 0; i < d; ++i) mean(i) = o.init_mean[static_cast<std::size_t>(i)];
    } else {
      throw ModelError("--init-mean expects 1 or d entries");
    }
  }
  Eigen::VectorXd var = Eigen::VectorXd::Constant(d, nonlq ? 0.04 : 1.0);
  if (!o.init_var.empty()) {
    if (o.init_var.size() == 1) {
      var.setConstant(o.init_var[0]);
    } else if (static_cast<Eigen::Index>(o.init_var.size()) == d) {
      for (Eigen::Index i = 0; i < d; ++i) var(i) = o.init_var[static_cast<std::size_t>(i)];
    } else {
      throw ModelError("--init-var expects 1 or d entries");
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      if (var(i) < 0.0) throw ModelError("--init-var entries must be nonnegative");
    }
  }
  if (kind == "point") {
    return InitialLaw::point(mean);
  }
  const Eigen::MatrixXd cov = var.asDiagonal();
  if (kind == "gaussian") {
    return InitialLaw::gaussian(mean, cov);
  }
  if (kind == "lognormal") {
    return InitialLaw::lognormal(mean, cov);
  }
  throw ModelError("unknown --init '" + kind + "' (expected gaussian, point, or lognormal)");
}

SimOptions make_sim_options(const Options& o) {
  SimOptions s;
  s.threads = o.threads;
  s.snapshot_every = o.snapshot_every;
  s.snapshot_particles = o.snapshot_particles;
  return s;
}

void write_pd_mono_report(const fs::path& path, const LQModel& model,
                          const RiccatiSolution& sol, const Residuals& res) {
  const std::vector<double> nodes = sol.grid.nodes();
  write_riccati_report(path.string(), sol, res, check_pd_conditions(model, nodes, 1e-8),
                       check_monotonicity(model, nodes));
}

void write_residuals_csv(const fs::path& path, const LQModel& model,
                         const RiccatiSolution& sol, std::size_t stride) {
  std::ofstream out(path);
  if (!out) {
    throw ModelError("cannot open " + path.string() + " for writing");
  }
  out << "tau,t,rlambda,rbeta,rgamma,rkappa\n";
  for (std::size_t i = 0; i + 1 < sol.cells(); i += stride) {
    const double tau = sol.grid.node(i);
    const std::size_t off = sol.row_offset(i);
    const std::size_t len = sol.Lambda_rows[i].size();
    for (std::size_t f = 1; f + 1 < len; f += stride) {
      const double t = sol.row_times[off + f];
      const Residuals r = residual(model, sol, tau, t);
      out << fmt(tau) << ',' << fmt(t) << ',' << fmt(r.rLambda) << ',' << fmt(r.rbeta)
          << ',' << fmt(r.rgamma) << ',' << fmt(r.rkappa) << '\n';
    }
  }
  if (!out) {
    throw ModelError("failed writing " + path.string());
  }
}

int cmd_solve(const Options& o, bool with_residual_table) {
  const LQModel model = load_model(o.model_path);
  const RiccatiSolution sol = solve_lq(model, o);
  const fs::path out(o.out);
  fs::create_directories(out);
  write_solution_csvs(out.string(), sol);
  const Residuals res = max_residual(model, sol, residual_stride(o));
  write_pd_mono_report(out / "riccati_report.json", model, sol, res);
  if (with_residual_table) {
    write_residuals_csv(out / "residuals.csv", model, sol, residual_stride(o));
  }
  std::cout << "solved " << model.name << " (" << sol.info.method << ", N=" << sol.info.N
            << "): max residuals lambda=" << fmt(res.rLambda) << " beta=" << fmt(res.rbeta)
            << " gamma=" << fmt(res.rgamma) << " kappa=" << fmt(res.rkappa) << "\n";
  std::cout << "wrote " << (out / "lambda.csv").string() << " and companions\n";
  return 0;
}

int cmd_simulate(const Options& o) {
  const AnyModel any = load_any_model(o.model_path);
  const fs::path out(o.out);
  fs::create_directories(out);
  if (std::holds_alternative<LQModel>(any)) {
    const LQModel& model = std::get<LQModel>(any);
    check_dt(o, model.T);
    const RiccatiSolution sol = solve_lq(model, o);
    const StrategySpec strat = StrategySpec::lq_feedback(FeedbackStrategy::from_solution(model, sol));
    const InitialLaw init = make_init(o, model.dims.d, false);
    SimOptions opts = make_sim_options(o);
    if (opts.snapshot_every == 0) {
      const auto steps = static_cast<std::size_t>(std::llround((model.T - o.t0) / o.dt));
      opts.snapshot_every = std::max<std::size_t>(1, steps / 20);
    }
    const ParticleEnsemble ens =
        simulate(model, strat, init, o.t0, o.particles, o.paths, o.dt, o.seed, opts);
    write_paths_csv((out / "paths.csv").string(), ens);
    const CostEstimate est = estimate_cost(ens, CostSpec::lq_at(model, o.t0));
    write_cost_json((out / "cost.json").string(), est, ens, o.t0);
    std::cout << "simulated " << model.name << ": cost mean=" << fmt(est.mean)
              << " stderr=" << fmt(est.std_error) << " (N=" << o.particles << ", M=" << o.paths
              << ", dt=" << fmt(o.dt) << ")\n";
  } else {
    const NonLQModel& model = std::get<NonLQModel>(any);
    check_dt(o, model.T);
    const NonLQClosedForm cf = nonlq_solution(model);
    const StrategySpec strat =
        StrategySpec::scalar_linear([cf](double t) { return cf.abar(t); });
    const InitialLaw init = make_init(o, 1, true);
    SimOptions opts = make_sim_options(o);
    if (opts.snapshot_every == 0) {
      const auto steps = static_cast<std::size_t>(std::llround((model.T - o.t0) / o.dt));
      opts.snapshot_every = std::max<std::size_t>(1, steps / 20);
    }
    const ParticleEnsemble ens =
        simulate(model, strat, init, o.t0, o.particles, o.paths, o.dt, o.seed, opts);
    write_paths_csv((out / "paths.csv").string(), ens);
    const CostEstimate est = estimate_cost(ens, CostSpec::nonlq_at(model, o.t0));
    write_cost_json((out / "cost.json").string(), est, ens, o.t0);
    std::cout << "simulated " << model.name << ": objective mean=" << fmt(est.mean)
              << " stderr=" << fmt(est.std_error) << " (N=" << o.particles << ", M=" << o.paths
              << ", dt=" << fmt(o.dt) << ")\n";
  }
  std::cout << "wrote " << (out / "paths.csv").string() << ", " << (out / "cost.json").string()
            << "\n";
  return 0;
}

int cmd_verify(const Options& o) {
  const AnyModel any = load_any_model(o.model_path);
  const fs::path out(o.out);
  fs::create_directories(out);
  if (std::holds_alternative<LQModel>(any)) {
    const LQModel& model = std::get<LQModel>(any);
    check_dt(o, model.T);
    const RiccatiSolution sol = solve_lq(model, o);

    const InitialLaw init = make_init(o, model.dims.d, false);
    const MeasureMoments base_mom = init.moments();
    std::vector<MeasureMoments> moment_samples;
    moment_samples.push_back(base_mom);
    {
      MeasureMoments shifted = base_mom;
      shifted.mean = base_mom.mean.array() + 0.5;
      shifted.cov = base_mom.cov + 0.25 * Eigen::MatrixXd::Identity(model.dims.d, model.dims.d);
      moment_samples.push_back(shifted);
      MeasureMoments spread = base_mom;
      spread.mean = base_mom.mean.array() - 0.5;
      spread.cov = 2.0 * base_mom.cov + Eigen::MatrixXd::Identity(model.dims.d, model.dims.d);
      moment_samples.push_back(spread);
    }
    std::vector<double> t_grid;
    for (int i = 0; i < 5; ++i) {
      t_grid.push_back(model.T * 0.2 * static_cast<double>(i));
    }
    const CertificateReport cert = equilibrium_certificate(model, sol, t_grid, moment_samples,
                                                           o.perturbations, o.cert_tol, o.seed);
    std::vector<GammaScanRow> rows;
    rows.reserve(cert.samples.size());
    for (const auto& s : cert.samples) {
      GammaScanRow row;
      row.t = s.t;
      row.perturbation_id = "m" + std::to_string(s.moment_index) + "-v" +
                            std::to_string(s.perturbation_index);
      row.gamma = s.gamma;
      row.analytic_min_check = s.gamma_at_eq;
      rows.push_back(row);
    }
    write_gamma_scan((out / "gamma_scan.csv").string(), rows);

    AffinePerturbation v = equilibrium_affine(model, sol, o.t0, base_mom);
    std::string probe_id = "equilibrium";
    if (!o.probe_equilibrium) {
      v.c = v.c.array() + o.probe_offset;
      probe_id = "intercept-offset";
    }
    const DeltaReport report = estimate_delta(model, sol, v, o.t0, init, o.eps, o.particles,
                                              o.paths, o.dt, o.seed, o.threads, probe_id);
    write_delta_report((out / "delta_report.json").string(), report);

    const bool pass = cert.pass && report.pass;
    std::cout << "certificate: min gamma=" << fmt(cert.min_gamma)
              << ", max |gamma(eq)|=" << fmt(cert.max_eq_gamma) << " -> "
              << (cert.pass ? "pass" : "FAIL") << "\n";
    std::cout << "monte carlo probe (" << probe_id << "): Delta=" << fmt(report.richardson)
              << " +/- " << fmt(report.richardson_std_error)
              << ", analytic Gamma=" << fmt(report.analytic_gamma) << " -> "
              << (report.pass ? "pass" : "FAIL") << "\n";
    std::cout << "verify: " << (pass ? "PASS" : "FAIL") << "\n";
    return pass ? 0 : 1;
  }

  const NonLQModel& model = std::get<NonLQModel>(any);
  check_dt(o, model.T);
  std::unique_ptr<InitialLaw> init;
  if (!o.init_kind.empty() || !o.init_mean.empty() || !o.init_var.empty()) {
    init = std::make_unique<InitialLaw>(make_init(o, 1, true));
  }
  const double offset = o.probe_equilibrium ? 0.0 : o.probe_offset;
  const DeltaReport report = nonlq_verify(model, o.particles, o.paths, o.dt, o.seed, o.eps,
                                          offset, init.get(), o.threads);
  write_delta_report((out / "delta_report.json").string(), report);

  const NonLQClosedForm cf = nonlq_solution(model);
  LawStats st;
  if (init) {
    st = nonlq_law_stats(model, *init);
  } else {
    st = nonlq_law_stats(model, InitialLaw::lognormal(Eigen::VectorXd::Zero(1),
                                                      0.04 * Eigen::MatrixXd::Identity(1, 1)));
  }
  std::vector<GammaScanRow> rows;
  const double ab = cf.abar(0.0);
  for (double scale : {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0}) {
    GammaScanRow row;
    row.t = 0.0;
    row.perturbation_id = "offset" + fmt(scale * o.probe_offset);
    row.gamma = cf.delta_gap(0.0, ab + scale * o.probe_offset, st.I);
    row.analytic_min_check = cf.delta_gap(0.0, ab, st.I);
    rows.push_back(row);
  }
  write_gamma_scan((out / "gamma_scan.csv").string(), rows);

  std::cout << "monte carlo probe (" << report.perturbation_id
            << "): Delta=" << fmt(report.richardson) << " +/- "
            << fmt(report.richardson_std_error)
            << ", analytic gap=" << fmt(report.analytic_gamma) << " -> "
            << (report.pass ? "pass" : "FAIL") << "\n";
  std::cout << "verify: " << (report.pass ? "PASS" : "FAIL") << "\n";
  return report.pass ? 0 : 1;
}

nlohmann::json load_params(const std::string& path) {
  if (path.empty()) {
    return nlohmann::json::object();
  }
  std::ifstream in(path);
  if (!in) {
    throw ModelError("cannot open params file: " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ModelError(std::string("invalid params JSON: ") + e.what());
  }
  return j;
}

DiscountFn parse_discount_params(const nlohmann::json& j) {
  if (j.is_null()) {
    return DiscountFn::one();
  }
  const std::string kind = j.value("kind", "one");
  if (kind == "one") return DiscountFn::one();
  if (kind == "exponential") return DiscountFn::exponential(j.value("rate", 0.0));
  if (kind == "hyperbolic") return DiscountFn::hyperbolic(j.value("a", 1.0), j.value("b", 1.0));
  if (kind == "power") return DiscountFn::power(j.value("exponent", 1.0));
  throw ModelError("unknown discount kind in params: " + kind);
}

struct FieldError {
  double abs = 0.0;
  double rel = 0.0;
};

// Sup-norm errors between a numeric solution and the closed form, over shared nodes.
FieldError field_error(const RiccatiSolution& num, const MeanVarianceClosedForm& cf, int which) {
  double sup_err = 0.0;
  double sup_ref = 0.0;
  for (std::size_t i = 0; i < num.cells(); ++i) {
    const double tau = num.grid.node(i);
    const std::size_t off = num.row_offset(i);
    for (std::size_t f = 0; f < num.Lambda_rows[i].size(); ++f) {
      const double t = num.row_times[off + f];
      double got = 0.0;
      double ref = 0.0;
      switch (which) {
        case 0:
          got = num.Lambda_rows[i][f](0, 0);
          ref = cf.Lambda(tau, t);
          break;
        case 1:
          got = num.beta_rows[i][f](0, 0);
          ref = 0.0;
          break;
        case 2:
          got = num.gamma_rows[i][f](0);
          ref = cf.gamma(tau, t);
          break;
        default:
          got = num.kappa_rows[i][f];
          ref = cf.kappa(tau, t);
          break;
      }
      sup_err = std::max(sup_err, std::abs(got - ref));
      sup_ref = std::max(sup_ref, std::abs(ref));
    }
  }
  FieldError e;
  e.abs = sup_err;
  e.rel = sup_err / std::max(sup_ref, 1e-300);
  return e;
}

int cmd_example(const Options& o) {
  const fs::path out(o.out);
  fs::create_directories(out);
  const nlohmann::json params = load_params(o.params_path);

  if (o.example_name == "mean-variance") {
    MeanVarianceParams p;
    p.r = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, params.value("r", 0.0)));
    p.rho = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, params.value("rho", 0.2)));
    p.theta = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, params.value("theta", 0.3)));
    p.theta0 = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, params.value("theta0", 0.1)));
    p.eta = params.value("eta", 1.0);
    p.T = params.value("T", 1.0);
    if (params.contains("lambda")) {
      p.lambda = parse_discount_params(params["lambda"]);
    } else {
      p.lambda = DiscountFn::hyperbolic(1.0, 1.0);
    }
    const LQModel model = mean_variance_model(p);
    const MeanVarianceClosedForm cf = mean_variance_closed_form(p, o.grid, o.substeps);

    const fs::path cf_dir = out / "closed_form";
    fs::create_directories(cf_dir);
    write_solution_csvs(cf_dir.string(), cf.solution);

    Options po = o;
    po.method = "partition";
    const RiccatiSolution solp = solve_lq(model, po);
    Options fo = o;
    fo.method = "fixed-point";
    const RiccatiSolution solf = solve_lq(model, fo);
    write_solution_csvs(out.string(), solp);
    write_pd_mono_report(out / "riccati_report.json", model, solp,
                         max_residual(model, solp, residual_stride(o)));

    std::ofstream cmp(out / "comparison.csv");
    if (!cmp) throw ModelError("cannot open comparison.csv for writing");
    cmp << "field,method,sup_abs_err,sup_rel_err\n";
    const char* fields[4] = {"lambda", "beta", "gamma", "kappa"};
    double worst_rel = 0.0;
    for (int which = 0; which < 4; ++which) {
      const FieldError ep = field_error(solp, cf, which);
      const FieldError ef = field_error(solf, cf, which);
      cmp << fields[which] << ",partition," << fmt(ep.abs) << ',' << fmt(ep.rel) << '\n';
      cmp << fields[which] << ",fixed-point," << fmt(ef.abs) << ',' << fmt(ef.rel) << '\n';
      if (which != 1) {
        worst_rel = std::max({worst_rel, ep.rel, ef.rel});
      } else {
        // beta should vanish identically; track its absolute size instead.
        worst_rel = std::max({worst_rel, ep.abs, ef.abs});
      }
    }
    if (!cmp) throw ModelError("failed writing comparison.csv");
    std::cout << "mean-variance: worst sup-norm deviation from closed form " << fmt(worst_rel)
              << " across both solvers\n";
    std::cout << "wrote " << (out / "comparison.csv").string() << "\n";
    return 0;
  }

  if (o.example_name == "systemic-risk") {
    SystemicRiskParams p;
    p.k = params.value("k", 6.0);
    p.q = params.value("q", 1.0);
    p.c = params.value("c", 1.0);
    p.eta = params.value("eta", 1.0);
    p.sigma = params.value("sigma", 1.0);
    p.rho = params.value("rho", 0.5);
    p.T = params.value("T", 1.0);
    std::string lam_kind = "one";
    if (params.contains("lambda")) {
      p.lambda = parse_discount_params(params["lambda"]);
      lam_kind = params["lambda"].value("kind", "one");
    }
    const SystemicRiskEquilibrium eq =
        systemic_risk_equilibrium(p, o.grid, o.tol, o.max_iter, o.substeps);
    write_solution_csvs(out.string(), eq.solution);
    const Residuals res = max_residual(eq.model, eq.solution, residual_stride(o));
    write_pd_mono_report(out / "riccati_report.json", eq.model, eq.solution, res);

    std::ofstream cmp(out / "comparison.csv");
    if (!cmp) throw ModelError("cannot open comparison.csv for writing");
    cmp << "check,value\n";
    cmp << "max_residual_lambda," << fmt(res.rLambda) << '\n';
    cmp << "max_residual_beta," << fmt(res.rbeta) << '\n';
    cmp << "max_residual_gamma," << fmt(res.rgamma) << '\n';
    cmp << "max_residual_kappa," << fmt(res.rkappa) << '\n';
    if (lam_kind == "one") {
      // With a trivial discount the diagonal reduces to a classical scalar Riccati
      // ODE; integrate it with fine RK4 steps and compare on the diagonal.
      const std::size_t n = eq.solution.diag_times.size();
      double sup = 0.0;
      double y = p.c / 2.0;
      std::size_t idx = n;
      auto rhs = [&p](double lam) {
        return 2.0 * p.k * lam + 2.0 * (lam + p.q / 2.0) * (lam + p.q / 2.0) - p.eta / 2.0;
      };
      while (idx-- > 0) {
        const double t = eq.solution.diag_times[idx];
        sup = std::max(sup, std::abs(eq.solution.Lambda_diag[idx](0, 0) - y));
        if (idx == 0) break;
        const double tprev = eq.solution.diag_times[idx - 1];
        double h = (t - tprev) / 16.0;
        double cur = y;
        double tc = t;
        for (int s = 0; s < 16; ++s) {
          const double k1 = rhs(cur);
          const double k2 = rhs(cur - 0.5 * h * k1);
          const double k3 = rhs(cur - 0.5 * h * k2);
          const double k4 = rhs(cur - h * k3);
          cur -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
          tc -= h;
        }
        (void)tc;
        y = cur;
      }
      cmp << "classical_riccati_sup_err," << fmt(sup) << '\n';
      std::cout << "systemic-risk: classical Riccati oracle sup error " << fmt(sup) << "\n";
    }
    if (!cmp) throw ModelError("failed writing comparison.csv");
    std::cout << "systemic-risk: max residuals lambda=" << fmt(res.rLambda)
              << " gamma=" << fmt(res.rgamma) << " kappa=" << fmt(res.rkappa) << "\n";
    std::cout << "wrote " << (out / "comparison.csv").string() << "\n";
    return 0;
  }

  if (o.example_name == "nonlq") {
    NonLQParams p;
    if (!o.params_path.empty()) {
      const AnyModel any = load_any_model(o.params_path);
      if (!std::holds_alternative<NonLQModel>(any)) {
        throw ModelError("nonlq example expects a model file with type 'nonlq'");
      }
      p = std::get<NonLQModel>(any);
    } else {
      p.name = "nonlq-default";
      p.T = 1.0;
      p.mu = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, 0.3));
      p.sigma = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, 0.4));
      p.sigma0 = TimeFn::constant(Eigen::MatrixXd::Constant(1, 1, 0.2));
      p.theta = 0.5;
      p.delta = 2.0;
      p.lambda = DiscountFn::hyperbolic(1.0, 1.0);
      p.validate();
    }
    const NonLQClosedForm cf = nonlq_solution(p);
    std::ofstream tab(out / "nonlq_oracle.csv");
    if (!tab) throw ModelError("cannot open nonlq_oracle.csv for writing");
    tab << "t,abar,A_diag,B_diag,ode_residual\n";
    double worst = 0.0;
    for (int i = 0; i <= 20; ++i) {
      const double t = p.T * static_cast<double>(i) / 20.0;
      const double r = cf.ode_residual(0.0, std::min(t, p.T * (1.0 - 1e-6)));
      worst = std::max(worst, std::abs(r));
      tab << fmt(t) << ',' << fmt(cf.abar(t)) << ',' << fmt(cf.A(t, t)) << ','
          << fmt(cf.Bfield(t, t)) << ',' << fmt(r) << '\n';
    }
    if (!tab) throw ModelError("failed writing nonlq_oracle.csv");

    const DeltaReport report = nonlq_verify(p, o.particles, o.paths, o.dt, o.seed, o.eps,
                                            o.probe_offset, nullptr, o.threads);
    write_delta_report((out / "delta_report.json").string(), report);
    std::cout << "nonlq: max ODE residual " << fmt(worst) << ", spiked-gap probe Delta="
              << fmt(report.richardson) << " +/- " << fmt(report.richardson_std_error)
              << " vs analytic " << fmt(report.analytic_gamma) << " -> "
              << (report.pass ? "pass" : "FAIL") << "\n";
    std::cout << "wrote " << (out / "nonlq_oracle.csv").string() << ", "
              << (out / "delta_report.json").string() << "\n";
    return report.pass ? 0 : 1;
  }

  throw ModelError("unknown example '" + o.example_name + "'");
}

const char* error_class(const std::exception& e) {
  if (dynamic_cast<const ModelError*>(&e)) return "ModelError";
  if (dynamic_cast<const ConditionsViolated*>(&e)) return "ConditionsViolated";
  if (dynamic_cast<const IllConditioned*>(&e)) return "IllConditioned";
  if (dynamic_cast<const NotConverged*>(&e)) return "NotConverged";
  if (dynamic_cast<const SimulationDiverged*>(&e)) return "SimulationDiverged";
  if (dynamic_cast<const DomainViolation*>(&e)) return "DomainViolation";
  return "InternalError";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ModelError*>(&e)) return 2;
  return 3;
}

template <typename F>
int run_guarded(const Options& o, F&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    const char* cls = error_class(e);
    std::cerr << "error (" << cls << "): " << e.what() << "\n";
    try {
      fs::create_directories(o.out);
      write_error_json((fs::path(o.out) / "error.json").string(), cls, e.what());
    } catch (...) {
      // Best effort only; the exit code still reports the failure.
    }
    return exit_code_for(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Equilibrium solver and verifier for time-inconsistent mean-field control"};
  app.require_subcommand(1);

  Options o;

  auto add_solver_opts = [&o](CLI::App* sub) {
    sub->add_option("--method", o.method, "Solver: partition or fixed-point")
        ->default_val("partition");
    sub->add_option("--grid,-N", o.grid, "Number of grid cells")->default_val(100);
    sub->add_option("--substeps", o.substeps, "Integration substeps per cell")->default_val(4);
    sub->add_option("--tol", o.tol, "Fixed-point tolerance")->default_val(1e-10);
    sub->add_option("--max-iter", o.max_iter, "Fixed-point iteration cap")->default_val(200);
    sub->add_option("--window", o.window, "Fixed-point window length (-1 = whole horizon)")
        ->default_val(-1.0);
  };
  auto add_sim_opts = [&o](CLI::App* sub) {
    sub->add_option("--particles,-n", o.particles, "Particles per path");
    sub->add_option("--paths,-M", o.paths, "Independent common-noise paths");
    sub->add_option("--dt", o.dt, "Euler step size")->default_val(1e-3);
    sub->add_option("--seed", o.seed, "Seed governing all randomness")->default_val(1);
    sub->add_option("--t0", o.t0, "Initial time")->default_val(0.0);
    sub->add_option("--threads", o.threads, "Worker thread cap (0 = hardware)")->default_val(0);
    sub->add_option("--init", o.init_kind, "Initial law: gaussian, point, or lognormal");
    sub->add_option("--init-mean", o.init_mean, "Initial mean (1 or d entries)");
    sub->add_option("--init-var", o.init_var, "Initial variance diagonal (1 or d entries)");
  };

  CLI::App* solve = app.add_subcommand("solve", "Solve the non-local Riccati system");
  solve->add_option("--model", o.model_path, "Model JSON file")->required();
  solve->add_option("--out", o.out, "Output directory")->required();
  add_solver_opts(solve);

  CLI::App* residuals = app.add_subcommand("residuals", "Solve and tabulate residuals");
  residuals->add_option("--model", o.model_path, "Model JSON file")->required();
  residuals->add_option("--out", o.out, "Output directory")->required();
  add_solver_opts(residuals);

  CLI::App* simulate = app.add_subcommand("simulate", "Simulate the particle system");
  simulate->add_option("--model", o.model_path, "Model JSON file")->required();
  simulate->add_option("--out", o.out, "Output directory")->required();
  add_solver_opts(simulate);
  add_sim_opts(simulate);
  simulate->add_option("--snapshot-every", o.snapshot_every,
                       "Record particle snapshots every k steps (0 = auto)");
  simulate->add_option("--snapshot-particles", o.snapshot_particles,
                       "Particles retained per snapshot");

  CLI::App* verify = app.add_subcommand("verify", "Verify the equilibrium property");
  verify->add_option("--model", o.model_path, "Model JSON file")->required();
  verify->add_option("--out", o.out, "Output directory")->required();
  add_solver_opts(verify);
  add_sim_opts(verify);
  verify->add_option("--eps", o.eps, "Spike widths (descending); default scales with horizon");
  verify->add_option("--perturbations", o.perturbations,
                     "Random perturbations per certificate probe")
      ->default_val(100);
  verify->add_option("--cert-tol", o.cert_tol, "Certificate tolerance")->default_val(1e-8);
  verify->add_flag("--probe-equilibrium", o.probe_equilibrium,
                   "Probe the equilibrium strategy itself (expect Delta = 0)");
  verify->add_option("--probe-offset", o.probe_offset,
                     "Intercept offset for the non-equilibrium probe");

  CLI::App* example = app.add_subcommand("example", "Run a bundled example");
  example->add_option("name", o.example_name, "mean-variance, systemic-risk, or nonlq")
      ->required()
      ->check(CLI::IsMember({"mean-variance", "systemic-risk", "nonlq"}));
  example->add_option("--params", o.params_path, "Optional parameter JSON");
  example->add_option("--out", o.out, "Output directory")->required();
  add_solver_opts(example);
  add_sim_opts(example);
  example->add_option("--eps", o.eps, "Spike widths for the nonlq probe");
  example->add_option("--probe-offset", o.probe_offset, "Strategy offset for the nonlq probe");

  // Defaults tuned per subcommand.
  o.particles = 5000;
  o.paths = 16;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (verify->parsed()) {
    if (verify->count("--particles") == 0) o.particles = 4000;
    if (verify->count("--paths") == 0) o.paths = 24;
    if (verify->count("--probe-offset") == 0) o.probe_offset = 0.5;
  }
  if (example->parsed()) {
    if (example->count("--particles") == 0) o.particles = 4000;
    if (example->count("--paths") == 0) o.paths = 24;
    if (example->count("--probe-offset") == 0) o.probe_offset = 0.3;
  }

  if (solve->parsed()) return run_guarded(o, [&o] { return cmd_solve(o, false); });
  if (residuals->parsed()) return run_guarded(o, [&o] { return cmd_solve(o, true); });
  if (simulate->parsed()) return run_guarded(o, [&o] { return cmd_simulate(o); });
  if (verify->parsed()) return run_guarded(o, [&o] { return cmd_verify(o); });
  if (example->parsed()) return run_guarded(o, [&o] { return cmd_example(o); });
  return 2;
}
