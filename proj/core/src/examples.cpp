#include "mfeq/examples.hpp"

#include <cmath>
#include <utility>

#include "mfeq/errors.hpp"
#include "mfeq/quadrature.hpp"
#include "riccati_detail.hpp"

namespace mfeq {

namespace {

double sc(const TimeFn& f, double t) { return f(t)(0, 0); }
double sq(double x) { return x * x; }

Eigen::MatrixXd scalar1(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

}  // namespace

// ---------------------------------------------------------------------------
// Mean-variance

LQModel mean_variance_model(const MeanVarianceParams& p) {
  if (!(p.eta > 0.0)) throw ModelError("mean-variance: eta must be positive");
  if (!(p.T > 0.0)) throw ModelError("mean-variance: horizon must be positive");
  LQModel mo = zero_model(Dims{1, 1, 1, 1}, p.T);
  mo.name = "mean-variance";
  mo.B = p.r;
  mo.C = p.rho;
  mo.F = p.theta;
  mo.F0 = p.theta0;
  mo.P = OneTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(0.5 * p.eta)), p.T);
  mo.Pbar =
      OneTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(-0.5 * p.eta)), p.T);
  mo.pbar = OneTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(-1.0)), p.T);
  mo.discount = p.lambda;
  mo.validate();
  return mo;
}

namespace {

// Integrands of the closed-form fields.
double mv_vol2(const MeanVarianceParams& p, double s) {
  return sq(sc(p.theta, s)) + sq(sc(p.theta0, s));
}
double mv_f1(const MeanVarianceParams& p, double s) {
  return 2.0 * sc(p.r, s) - sq(sc(p.rho, s)) / mv_vol2(p, s);
}
double mv_frho(const MeanVarianceParams& p, double s) {
  return sq(sc(p.rho, s)) / mv_vol2(p, s);
}

void mv_validate(const MeanVarianceParams& p) {
  if (!(p.eta > 0.0) || !(p.T > 0.0))
    throw ModelError("mean-variance: eta and the horizon must be positive");
  for (int i = 0; i <= 100; ++i) {
    const double t = p.T * static_cast<double>(i) / 100.0;
    if (mv_vol2(p, t) < 1e-12 || sq(sc(p.theta, t)) < 1e-12)
      throw ModelError("mean-variance: theta must stay bounded away from zero");
  }
}

}  // namespace

double MeanVarianceClosedForm::Lambda(double tau, double t) const {
  const auto& p = params;
  const double e1 = integrate_adaptive([&](double s) { return mv_f1(p, s); }, t, p.T, 1e-12);
  return 0.5 * p.eta * p.lambda(p.T - tau) * std::exp(e1);
}

double MeanVarianceClosedForm::gamma(double tau, double t) const {
  const auto& p = params;
  const double e2 =
      integrate_adaptive([&](double s) { return sc(p.r, s); }, t, p.T, 1e-12);
  return -p.lambda(p.T - tau) * std::exp(e2);
}

double MeanVarianceClosedForm::kappa(double tau, double t) const {
  const auto& p = params;
  const double K = integrate_adaptive(
      [&](double s) {
        const double irho =
            integrate_adaptive([&](double v) { return mv_frho(p, v); }, s, p.T, 1e-12);
        return sq(sc(p.rho, s)) / sq(sc(p.theta, s)) * std::exp(irho);
      },
      t, p.T, 1e-10);
  return -0.5 / p.eta * p.lambda(p.T - tau) * K;
}

double MeanVarianceClosedForm::gain(double t) const {
  return sc(params.rho, t) / mv_vol2(params, t);
}

double MeanVarianceClosedForm::intercept(double t) const {
  const auto& p = params;
  const double e = integrate_adaptive(
      [&](double s) { return mv_frho(p, s) - sc(p.r, s); }, t, p.T, 1e-12);
  return sc(p.rho, t) / (p.eta * sq(sc(p.theta, t))) * std::exp(e);
}

double MeanVarianceClosedForm::feedback_value(double t, double x, double mean) const {
  return -gain(t) * (x - mean) + intercept(t);
}

MeanVarianceClosedForm mean_variance_closed_form(const MeanVarianceParams& p, std::size_t N,
                                                 int substeps) {
  mv_validate(p);
  const LQModel model = mean_variance_model(p);
  const TriangularGrid grid = TriangularGrid::uniform(N, p.T);

  MeanVarianceClosedForm out;
  out.params = p;
  detail::init_storage(out.solution, model, grid, substeps);
  RiccatiSolution& sol = out.solution;

  // Cumulative integrals on the diagonal axis, accumulated backwards from T
  // cell by cell so every stored sample gets full adaptive accuracy.
  const std::size_t G = sol.diag_times.size();
  std::vector<double> e1(G, 0.0), e2(G, 0.0), irho(G, 0.0), kk(G, 0.0);
  for (std::size_t g = G - 1; g-- > 0;) {
    const double a = sol.diag_times[g], b = sol.diag_times[g + 1];
    e1[g] = e1[g + 1] + integrate_adaptive([&](double s) { return mv_f1(p, s); }, a, b, 1e-13);
    e2[g] = e2[g + 1] + integrate_adaptive([&](double s) { return sc(p.r, s); }, a, b, 1e-13);
    irho[g] =
        irho[g + 1] + integrate_adaptive([&](double s) { return mv_frho(p, s); }, a, b, 1e-13);
    kk[g] = kk[g + 1] +
            integrate_adaptive(
                [&](double s) {
                  const double tail =
                      irho[g + 1] +
                      integrate_adaptive([&](double v) { return mv_frho(p, v); }, s, b, 1e-13);
                  return sq(sc(p.rho, s)) / sq(sc(p.theta, s)) * std::exp(tail);
                },
                a, b, 1e-13);
  }

  const std::size_t cells = grid.cells();
  const auto sub = static_cast<std::size_t>(substeps);
  for (std::size_t i = 0; i <= cells; ++i) {
    const double lam = p.lambda(p.T - grid.node(i));
    const std::size_t len = sol.Lambda_rows[i].size();
    for (std::size_t f = 0; f + 1 < len; ++f) {  // keep the assigned terminal sample
      const std::size_t g = 2 * (i * sub + f);
      sol.Lambda_rows[i][f] = scalar1(0.5 * p.eta * lam * std::exp(e1[g]));
      sol.gamma_rows[i][f] = Eigen::VectorXd::Constant(1, -lam * std::exp(e2[g]));
      sol.kappa_rows[i][f] = -0.5 / p.eta * lam * kk[g];
    }
  }
  std::vector<Eigen::MatrixXd> theta_grid(G), theta_bar_grid(G, Eigen::MatrixXd::Zero(1, 1));
  std::vector<Eigen::VectorXd> offset_grid(G);
  for (std::size_t g = 0; g < G; ++g) {
    const double t = sol.diag_times[g];
    const double lam_t = p.lambda(p.T - t);
    sol.Lambda_diag[g] = scalar1(0.5 * p.eta * lam_t * std::exp(e1[g]));
    sol.gamma_diag[g] = Eigen::VectorXd::Constant(1, -lam_t * std::exp(e2[g]));
    theta_grid[g] = scalar1(sc(p.rho, t) / mv_vol2(p, t));
    const double intercept =
        sc(p.rho, t) / (p.eta * sq(sc(p.theta, t))) * std::exp(irho[g] - e2[g]);
    offset_grid[g] = Eigen::VectorXd::Constant(1, -intercept);
  }

  sol.info.method = "closed-form";
  sol.info.N = cells;
  sol.info.substeps = substeps;
  sol.info.pd_pass = true;
  sol.info.mono_pass = true;
  sol.info.bound_ok = true;
  sol.finalize_checks(model);

  out.strategy = FeedbackStrategy::from_grids(sol.diag_times, std::move(theta_grid),
                                              std::move(theta_bar_grid), std::move(offset_grid));
  return out;
}

// ---------------------------------------------------------------------------
// Systemic risk

LQModel systemic_risk_model(const SystemicRiskParams& p) {
  if (!(p.T > 0.0)) throw ModelError("systemic-risk: horizon must be positive");
  if (p.rho < 0.0 || p.rho > 1.0) throw ModelError("systemic-risk: rho must lie in [0, 1]");
  LQModel mo = zero_model(Dims{1, 1, 1, 1}, p.T);
  mo.name = "systemic-risk";
  mo.B = TimeFn::constant(scalar1(-p.k));
  mo.Bbar = TimeFn::constant(scalar1(p.k));
  mo.C = TimeFn::constant(scalar1(1.0));
  mo.theta = TimeFn::constant(scalar1(p.sigma * std::sqrt(1.0 - p.rho * p.rho)));
  mo.theta0 = TimeFn::constant(scalar1(p.sigma * p.rho));
  mo.Q = TwoTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(0.5 * p.eta)));
  mo.Qbar = TwoTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(-0.5 * p.eta)));
  mo.R = TwoTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(0.5)));
  mo.M = TwoTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(0.5 * p.q)));
  mo.Mbar = TwoTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(-0.5 * p.q)));
  mo.P = OneTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(0.5 * p.c)), p.T);
  mo.Pbar = OneTimeFn::discounted_separable(p.lambda, TimeFn::constant(scalar1(-0.5 * p.c)), p.T);
  mo.discount = p.lambda;
  mo.validate();
  return mo;
}

SystemicRiskEquilibrium systemic_risk_equilibrium(const SystemicRiskParams& p, std::size_t N,
                                                  double tol, int max_iter, int substeps) {
  SystemicRiskEquilibrium out;
  out.model = systemic_risk_model(p);
  out.solution = solve_systemic_risk(p, N, tol, max_iter, substeps);
  out.strategy = FeedbackStrategy::from_solution(out.model, out.solution);
  return out;
}

// ---------------------------------------------------------------------------
// Relative performance (multiplicative dynamics)

namespace {

double nonlq_den(const NonLQModel& p, double t) {
  const double om = 1.0 - p.theta;
  return sq(sc(p.sigma, t)) + om * (om + p.delta * p.theta) * sq(sc(p.sigma0, t));
}

// Integrand of the exponent of A: (delta/2)(1 - 1/delta)(1-theta)^2 mu^2/den.
double nonlq_rate(const NonLQModel& p, double s) {
  return 0.5 * (p.delta - 1.0) * sq(1.0 - p.theta) * sq(sc(p.mu, s)) / nonlq_den(p, s);
}

// Growth rate of the relevant law statistic under the fraction ab at time t;
// concave in ab, maximized exactly at the equilibrium fraction.
double nonlq_growth(const NonLQModel& p, double t, double ab) {
  return -sq(ab) * nonlq_den(p, t) / (2.0 * p.delta) + (1.0 - p.theta) * ab * sc(p.mu, t);
}

}  // namespace

double NonLQClosedForm::abar(double t) const {
  return params.delta * (1.0 - params.theta) * sc(params.mu, t) / nonlq_den(params, t);
}

double NonLQClosedForm::A(double tau, double t) const {
  const double e = integrate_adaptive([&](double s) { return nonlq_rate(params, s); }, t,
                                      params.T, 1e-12);
  return -params.lambda(params.T - tau) * std::exp(e);
}

double NonLQClosedForm::Bfield(double tau, double t) const {
  if (params.delta != 1.0) return 0.0;
  const double m1 = integrate_adaptive(
      [&](double s) { return sq(1.0 - params.theta) * sq(sc(params.mu, s)) / nonlq_den(params, s); },
      t, params.T, 1e-12);
  return -params.lambda(params.T - tau) * 0.5 * m1;
}

double NonLQClosedForm::value_point(double tau, double t, double x) const {
  if (!(x > 0.0)) throw DomainViolation("multiplicative value: state must be positive");
  const double a = 1.0 - 1.0 / params.delta;
  return value_moment(tau, t, std::pow(x, (1.0 - params.theta) * a),
                      (1.0 - params.theta) * std::log(x));
}

double NonLQClosedForm::value_moment(double tau, double t, double I_mu, double L_mu) const {
  if (params.delta == 1.0) return A(tau, t) * L_mu + Bfield(tau, t);
  const double a = 1.0 - 1.0 / params.delta;
  return A(tau, t) * I_mu / a;
}

double NonLQClosedForm::ode_residual(double tau, double t) const {
  const double h = 1e-5;
  const double Ap = (A(tau, t + h) - A(tau, t - h)) / (2.0 * h);
  if (params.delta == 1.0) {
    const double Bp = (Bfield(tau, t + h) - Bfield(tau, t - h)) / (2.0 * h);
    return std::abs(Ap) + std::abs(Bp + A(tau, t) * nonlq_growth(params, t, abar(t)));
  }
  const double a = 1.0 - 1.0 / params.delta;
  const double coeff = 0.5 * params.delta * sq(1.0 - params.theta) * sq(sc(params.mu, t)) /
                       nonlq_den(params, t);
  return std::abs(Ap / a + coeff * A(tau, t));
}

double NonLQClosedForm::delta_gap(double t, double vbar, double I_mu) const {
  const double factor = params.delta == 1.0 ? 1.0 : I_mu;
  return A(t, t) * (nonlq_growth(params, t, vbar) - nonlq_growth(params, t, abar(t))) * factor;
}

NonLQClosedForm nonlq_solution(const NonLQModel& p) {
  p.validate();
  return NonLQClosedForm{p};
}

LawStats nonlq_law_stats(const NonLQModel& model, const InitialLaw& init) {
  if (init.mean.size() != 1)
    throw ModelError("multiplicative model: the initial law must be scalar");
  const double a = 1.0 - 1.0 / model.delta;
  const double th = model.theta;
  LawStats st;
  switch (init.kind) {
    case InitialLaw::Kind::Point: {
      const double x0 = init.mean(0);
      if (!(x0 > 0.0)) throw DomainViolation("multiplicative model: initial state must be positive");
      st.I = std::pow(x0, (1.0 - th) * a);
      st.L = (1.0 - th) * std::log(x0);
      break;
    }
    case InitialLaw::Kind::LogNormal: {
      const double m = init.mean(0), s2 = init.cov(0, 0);
      st.I = std::exp(a * m + 0.5 * a * a * s2 - th * a * (m + 0.5 * s2));
      st.L = (1.0 - th) * m - 0.5 * th * s2;
      break;
    }
    case InitialLaw::Kind::Gaussian:
      throw DomainViolation("multiplicative model: Gaussian initial law is not supported");
  }
  return st;
}

DeltaReport nonlq_verify(const NonLQModel& p, std::size_t N, std::size_t M, double dt,
                         std::uint64_t seed, std::vector<double> eps_list, double offset,
                         const InitialLaw* init_in, int threads) {
  const NonLQClosedForm cf = nonlq_solution(p);
  const InitialLaw init =
      init_in != nullptr
          ? *init_in
          : InitialLaw::lognormal(Eigen::VectorXd::Zero(1), scalar1(0.04));
  const LawStats st = nonlq_law_stats(p, init);

  const double t0 = 0.0;
  const double vbar = cf.abar(t0) + offset;
  const double analytic = cf.delta_gap(t0, vbar, st.I);
  const double ansatz = cf.value_moment(t0, t0, st.I, st.L);
  const std::vector<double> eps = snap_eps_ladder(std::move(eps_list), t0, p.T, dt);

  SimOptions opts;
  opts.threads = threads;
  const StrategySpec base = StrategySpec::scalar_linear([cf](double t) { return cf.abar(t); });
  const StrategySpec vspec = StrategySpec::scalar_linear([vbar](double) { return vbar; });
  const CostSpec cost = CostSpec::nonlq_at(p, t0);

  const ParticleEnsemble base_ens = simulate(p, base, init, t0, N, M, dt, seed, opts);
  const CostEstimate base_cost = estimate_cost(base_ens, cost);
  std::vector<CostEstimate> spiked_costs;
  for (double e : eps) {
    const StrategySpec spiked = spike(base, vspec, t0, e, p.T);
    const ParticleEnsemble ens = simulate(p, spiked, init, t0, N, M, dt, seed, opts);
    spiked_costs.push_back(estimate_cost(ens, cost));
  }

  DeltaReport report = assemble_delta_report(eps, base_cost, spiked_costs, analytic, ansatz,
                                             std::abs(offset) <= 1e-12);
  report.t = t0;
  report.perturbation_id = "constant-fraction";
  report.moments = init.moments();
  report.N = N;
  report.M = M;
  report.dt = dt;
  report.seed = seed;
  return report;
}

}  // namespace mfeq
