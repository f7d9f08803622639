#include "mfeq/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>
#include <utility>

#include "mfeq/errors.hpp"
#include "mfeq/rng.hpp"

namespace mfeq {

namespace {

// Square root factor of a PSD matrix via eigendecomposition; tolerates zero
// and slightly negative (roundoff) eigenvalues where a Cholesky would fail.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov) {
  if (cov.size() == 0) return cov;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw ModelError("initial law: eigendecomposition failed");
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
    throw ModelError("initial law: covariance is not positive semidefinite");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

std::size_t resolve_steps(double t0, double T, double dt) {
  if (!(dt > 0.0)) throw ModelError("simulate: dt must be positive");
  if (!(t0 >= 0.0) || !(t0 < T)) throw ModelError("simulate: need 0 <= t0 < T");
  const double span = T - t0;
  const auto steps = static_cast<std::size_t>(std::llround(span / dt));
  if (steps == 0 || std::abs(static_cast<double>(steps) * dt - span) > 1e-9 * std::max(T, 1.0))
    throw ModelError("simulate: dt must divide T - t0");
  return steps;
}

int resolve_threads(int requested, std::size_t jobs) {
  int t = requested;
  if (t <= 0) t = static_cast<int>(std::thread::hardware_concurrency());
  if (t <= 0) t = 1;
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(t), jobs));
}

// Runs job(j) for j in [0, jobs) across a thread pool; any exception is
// rethrown on the caller's thread.  Work items are independent, so the
// schedule cannot affect results.
template <typename Job>
void parallel_for(std::size_t jobs, int threads, Job&& job) {
  if (threads <= 1 || jobs <= 1) {
    for (std::size_t j = 0; j < jobs; ++j) job(j);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs) return;
      try {
        job(j);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

Eigen::MatrixXd sample_initial(const InitialLaw& init, Eigen::Index d, std::size_t N,
                               std::uint64_t seed, std::size_t path,
                               const Eigen::MatrixXd& factor) {
  Eigen::MatrixXd X(d, static_cast<Eigen::Index>(N));
  if (init.kind == InitialLaw::Kind::Point) {
    X.colwise() = init.mean;
    return X;
  }
  Eigen::MatrixXd Z(d, static_cast<Eigen::Index>(N));
  rng::normals(seed, 0, path, 0, 0, Z.data(), static_cast<std::size_t>(Z.size()));
  X = factor * Z;
  X.colwise() += init.mean;
  return X;
}

void record_snapshot(ParticleEnsemble& ens, std::size_t path, const Eigen::MatrixXd& X,
                     bool log_coords) {
  const auto kept = static_cast<Eigen::Index>(ens.snapshot_particles);
  if (log_coords)
    ens.snapshots[path].push_back(X.leftCols(kept).array().exp().matrix());
  else
    ens.snapshots[path].push_back(X.leftCols(kept));
}

}  // namespace

// ---------------------------------------------------------------------------
// InitialLaw

InitialLaw InitialLaw::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  InitialLaw law;
  law.kind = Kind::Gaussian;
  law.mean = std::move(mean);
  law.cov = std::move(cov);
  if (law.cov.rows() != law.mean.size() || law.cov.cols() != law.mean.size())
    throw ModelError("initial law: covariance shape does not match the mean");
  return law;
}

InitialLaw InitialLaw::point(Eigen::VectorXd x) {
  InitialLaw law;
  law.kind = Kind::Point;
  law.mean = std::move(x);
  law.cov = Eigen::MatrixXd::Zero(law.mean.size(), law.mean.size());
  return law;
}

InitialLaw InitialLaw::lognormal(Eigen::VectorXd log_mean, Eigen::MatrixXd log_cov) {
  InitialLaw law;
  law.kind = Kind::LogNormal;
  law.mean = std::move(log_mean);
  law.cov = std::move(log_cov);
  if (law.cov.rows() != law.mean.size() || law.cov.cols() != law.mean.size())
    throw ModelError("initial law: covariance shape does not match the mean");
  return law;
}

MeasureMoments InitialLaw::moments() const {
  MeasureMoments mom;
  switch (kind) {
    case Kind::Point:
      mom.mean = mean;
      mom.cov = Eigen::MatrixXd::Zero(mean.size(), mean.size());
      break;
    case Kind::Gaussian:
      mom.mean = mean;
      mom.cov = cov;
      break;
    case Kind::LogNormal: {
      const Eigen::Index d = mean.size();
      mom.mean.resize(d);
      mom.cov.resize(d, d);
      for (Eigen::Index i = 0; i < d; ++i)
        mom.mean(i) = std::exp(mean(i) + 0.5 * cov(i, i));
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
          mom.cov(i, j) = mom.mean(i) * mom.mean(j) * (std::exp(cov(i, j)) - 1.0);
      break;
    }
  }
  mom.validate();
  return mom;
}

// ---------------------------------------------------------------------------
// StrategySpec

StrategySpec StrategySpec::lq_feedback(FeedbackStrategy strategy) {
  StrategySpec s;
  s.kind_ = Kind::LqFeedback;
  s.feedback_ = std::make_shared<FeedbackStrategy>(std::move(strategy));
  return s;
}

StrategySpec StrategySpec::affine_override(AffinePerturbation v) {
  if (v.A.rows() != v.c.size())
    throw ModelError("affine strategy: A and c disagree on the control dimension");
  StrategySpec s;
  s.kind_ = Kind::AffineOverride;
  s.affine_ = std::move(v);
  return s;
}

StrategySpec StrategySpec::scalar_linear(std::function<double(double)> slope) {
  if (!slope) throw ModelError("scalar-linear strategy: empty slope function");
  StrategySpec s;
  s.kind_ = Kind::ScalarLinear;
  s.slope_ = std::move(slope);
  return s;
}

Eigen::MatrixXd StrategySpec::actions(double t, const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& mean) const {
  switch (kind_) {
    case Kind::LqFeedback: {
      Eigen::MatrixXd acts = -(feedback_->Theta(t) * (X.colwise() - mean));
      const Eigen::VectorXd shift = feedback_->Theta_bar(t) * mean + feedback_->offset(t);
      acts.colwise() -= shift;
      return acts;
    }
    case Kind::AffineOverride: {
      Eigen::MatrixXd acts = affine_.A * X;
      acts.colwise() += affine_.c;
      return acts;
    }
    case Kind::ScalarLinear: {
      if (X.rows() != 1)
        throw ModelError("scalar-linear strategy applied to a multidimensional state");
      return slope_(t) * X;
    }
    case Kind::Spiked: {
      const bool in_window = t >= spike_t_ - 1e-12 && t < spike_t_ + spike_eps_ - 1e-12;
      return (in_window ? *spike_ : *base_).actions(t, X, mean);
    }
  }
  throw ModelError("strategy: unknown kind");
}

Eigen::VectorXd StrategySpec::action(double t, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& mean) const {
  return actions(t, x, mean).col(0);
}

bool StrategySpec::scalar_linear_only() const {
  if (kind_ == Kind::ScalarLinear) return true;
  if (kind_ == Kind::Spiked) return base_->scalar_linear_only() && spike_->scalar_linear_only();
  return false;
}

double StrategySpec::slope(double t) const {
  if (kind_ == Kind::ScalarLinear) return slope_(t);
  if (kind_ == Kind::Spiked) {
    const bool in_window = t >= spike_t_ - 1e-12 && t < spike_t_ + spike_eps_ - 1e-12;
    return (in_window ? *spike_ : *base_).slope(t);
  }
  throw ModelError("strategy: slope() requires a scalar-linear strategy");
}

StrategySpec spike(const StrategySpec& base, const StrategySpec& v, double t, double eps,
                   double horizon) {
  if (!(eps > 0.0)) throw ModelError("spike: eps must be positive");
  if (t < -1e-12 || t + eps > horizon + 1e-9)
    throw ModelError("spike: window [t, t+eps) must lie inside [0, T)");
  StrategySpec s;
  s.kind_ = StrategySpec::Kind::Spiked;
  s.base_ = std::make_shared<StrategySpec>(base);
  s.spike_ = std::make_shared<StrategySpec>(v);
  s.spike_t_ = t;
  s.spike_eps_ = eps;
  return s;
}

// ---------------------------------------------------------------------------
// EmpiricalMeasure

MeasureMoments EmpiricalMeasure::moments() const {
  if (samples.cols() < 1) throw ModelError("empirical measure: no samples");
  MeasureMoments mom;
  mom.mean = samples.rowwise().mean();
  const Eigen::MatrixXd centered = samples.colwise() - mom.mean;
  mom.cov = centered * centered.transpose() / static_cast<double>(samples.cols());
  return mom;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

struct SnapshotPlan {
  std::vector<std::size_t> steps;
  std::size_t particles = 0;
};

SnapshotPlan plan_snapshots(const SimOptions& opts, std::size_t steps, std::size_t N) {
  SnapshotPlan plan;
  if (opts.snapshot_every == 0) return plan;
  for (std::size_t s = 0; s <= steps; s += opts.snapshot_every) plan.steps.push_back(s);
  if (plan.steps.back() != steps) plan.steps.push_back(steps);
  plan.particles = opts.snapshot_particles == 0 ? N : std::min(opts.snapshot_particles, N);
  return plan;
}

ParticleEnsemble make_ensemble(Eigen::Index d, Eigen::Index m, double t0, double T, double dt,
                               std::size_t steps, std::size_t N, std::size_t M,
                               std::uint64_t seed, const SnapshotPlan& plan, bool log_coords) {
  ParticleEnsemble ens;
  ens.N = N;
  ens.M = M;
  ens.t0 = t0;
  ens.T = T;
  ens.dt = dt;
  ens.seed = seed;
  ens.d = d;
  ens.m = m;
  ens.log_coords = log_coords;
  ens.times.resize(steps + 1);
  for (std::size_t s = 0; s <= steps; ++s)
    ens.times[s] = (s == steps) ? T : t0 + static_cast<double>(s) * dt;
  ens.moments.assign(M, {});
  ens.terminal_states.assign(M, {});
  ens.w0.assign(M, {});
  ens.snapshot_steps = plan.steps;
  ens.snapshot_particles = plan.particles;
  ens.snapshots.assign(M, {});
  return ens;
}

StepMoments interior_moments(const Eigen::MatrixXd& X, const Eigen::MatrixXd& acts,
                             const Eigen::VectorXd& mx, const Eigen::VectorXd& ma) {
  const double inv_n = 1.0 / static_cast<double>(X.cols());
  StepMoments sm;
  sm.x_mean = mx;
  sm.a_mean = ma;
  sm.xx = X * X.transpose() * inv_n;
  sm.xa = X * acts.transpose() * inv_n;
  sm.aa = acts * acts.transpose() * inv_n;
  return sm;
}

StepMoments terminal_moments(const Eigen::MatrixXd& X, Eigen::Index m) {
  const double inv_n = 1.0 / static_cast<double>(X.cols());
  StepMoments sm;
  sm.x_mean = X.rowwise().mean();
  sm.a_mean = Eigen::VectorXd::Zero(m);
  sm.xx = X * X.transpose() * inv_n;
  sm.xa = Eigen::MatrixXd::Zero(X.rows(), m);
  sm.aa = Eigen::MatrixXd::Zero(m, m);
  return sm;
}

[[noreturn]] void report_divergence(std::size_t path, std::size_t step, double t) {
  std::ostringstream os;
  os << "simulation diverged on path " << path << " at step " << step << " (t = " << t << ")";
  throw SimulationDiverged(os.str());
}

}  // namespace

ParticleEnsemble simulate(const LQModel& model, const StrategySpec& strategy,
                          const InitialLaw& init, double t0, std::size_t N, std::size_t M,
                          double dt, std::uint64_t seed, const SimOptions& opts) {
  model.validate();
  if (N < 2) throw ModelError("simulate: need at least two particles");
  if (M < 1) throw ModelError("simulate: need at least one common-noise path");
  const Eigen::Index d = model.dims.d;
  const Eigen::Index m = model.dims.m;
  if (init.mean.size() != d) throw ModelError("simulate: initial law dimension mismatch");
  const std::size_t steps = resolve_steps(t0, model.T, dt);
  const SnapshotPlan plan = plan_snapshots(opts, steps, N);
  ParticleEnsemble ens = make_ensemble(d, m, t0, model.T, dt, steps, N, M, seed, plan, false);

  const Eigen::MatrixXd init_factor =
      init.kind == InitialLaw::Kind::Point ? Eigen::MatrixXd() : psd_sqrt(init.cov);
  const double sqrt_dt = std::sqrt(dt);

  auto run_path = [&](std::size_t j) {
    Eigen::MatrixXd X = sample_initial(init, d, N, seed, j, init_factor);
    auto& path_moments = ens.moments[j];
    path_moments.resize(steps + 1);
    auto& w0 = ens.w0[j];
    w0.assign(steps + 1, 0.0);
    std::size_t next_snap = 0;

    Eigen::VectorXd z_idio(static_cast<Eigen::Index>(N));
    double z_common = 0.0;
    Eigen::MatrixXd drift(d, static_cast<Eigen::Index>(N));
    Eigen::MatrixXd sig(d, static_cast<Eigen::Index>(N));
    Eigen::MatrixXd sig0(d, static_cast<Eigen::Index>(N));

    for (std::size_t s = 0; s < steps; ++s) {
      const double t = ens.times[s];
      const Eigen::VectorXd mx = X.rowwise().mean();
      const Eigen::MatrixXd acts = strategy.actions(t, X, mx);
      if (acts.rows() != m || acts.cols() != X.cols())
        throw ModelError("simulate: strategy returned wrong control shape");
      const Eigen::VectorXd ma = acts.rowwise().mean();
      path_moments[s] = interior_moments(X, acts, mx, ma);
      if (next_snap < plan.steps.size() && plan.steps[next_snap] == s) {
        record_snapshot(ens, j, X, false);
        ++next_snap;
      }

      drift.noalias() = model.B(t) * X;
      drift.noalias() += model.C(t) * acts;
      drift.colwise() += Eigen::VectorXd(model.b0(t) + model.Bbar(t) * mx + model.Cbar(t) * ma);

      sig.noalias() = model.D(t) * X;
      sig.noalias() += model.F(t) * acts;
      sig.colwise() += Eigen::VectorXd(model.theta(t) + model.Dbar(t) * mx + model.Fbar(t) * ma);

      sig0.noalias() = model.D0(t) * X;
      sig0.noalias() += model.F0(t) * acts;
      sig0.colwise() +=
          Eigen::VectorXd(model.theta0(t) + model.D0bar(t) * mx + model.F0bar(t) * ma);

      rng::normals(seed, 1, j, 0, s, z_idio.data(), N);
      rng::normals(seed, 2, j, 0, s, &z_common, 1);
      w0[s + 1] = w0[s] + sqrt_dt * z_common;

      X += dt * drift;
      X += sig * (sqrt_dt * z_idio).asDiagonal();
      X += (sqrt_dt * z_common) * sig0;
      if (!X.allFinite()) report_divergence(j, s + 1, ens.times[s + 1]);
    }

    path_moments[steps] = terminal_moments(X, m);
    if (next_snap < plan.steps.size() && plan.steps[next_snap] == steps) record_snapshot(ens, j, X, false);
    ens.terminal_states[j] = std::move(X);
  };

  parallel_for(M, resolve_threads(opts.threads, M), run_path);
  return ens;
}

ParticleEnsemble simulate(const NonLQModel& model, const StrategySpec& strategy,
                          const InitialLaw& init, double t0, std::size_t N, std::size_t M,
                          double dt, std::uint64_t seed, const SimOptions& opts) {
  model.validate();
  if (N < 2) throw ModelError("simulate: need at least two particles");
  if (M < 1) throw ModelError("simulate: need at least one common-noise path");
  if (!strategy.scalar_linear_only())
    throw ModelError("multiplicative model: strategy must be scalar-linear");
  if (init.mean.size() != 1) throw ModelError("multiplicative model: state is scalar");
  if (init.kind == InitialLaw::Kind::Gaussian)
    throw DomainViolation("multiplicative model: Gaussian initial law is not supported");
  if (init.kind == InitialLaw::Kind::Point && init.mean(0) <= 0.0)
    throw DomainViolation("multiplicative model: initial state must be positive");
  const std::size_t steps = resolve_steps(t0, model.T, dt);
  const SnapshotPlan plan = plan_snapshots(opts, steps, N);
  ParticleEnsemble ens = make_ensemble(1, 1, t0, model.T, dt, steps, N, M, seed, plan, true);

  // Work in log coordinates: Y = log X keeps the state positive exactly.
  InitialLaw log_init = init.kind == InitialLaw::Kind::Point
                            ? InitialLaw::point(init.mean.array().log().matrix())
                            : InitialLaw::gaussian(init.mean, init.cov);
  const Eigen::MatrixXd init_factor =
      log_init.kind == InitialLaw::Kind::Point ? Eigen::MatrixXd() : psd_sqrt(log_init.cov);
  const double sqrt_dt = std::sqrt(dt);

  auto run_path = [&](std::size_t j) {
    Eigen::MatrixXd Y = sample_initial(log_init, 1, N, seed, j, init_factor);
    auto& path_moments = ens.moments[j];
    path_moments.resize(steps + 1);
    auto& w0 = ens.w0[j];
    w0.assign(steps + 1, 0.0);
    std::size_t next_snap = 0;

    Eigen::VectorXd z_idio(static_cast<Eigen::Index>(N));
    double z_common = 0.0;
    Eigen::MatrixXd X(1, static_cast<Eigen::Index>(N));

    for (std::size_t s = 0; s < steps; ++s) {
      const double t = ens.times[s];
      const double abar = strategy.slope(t);
      X = Y.array().exp().matrix();
      const Eigen::VectorXd mx = X.rowwise().mean();
      const Eigen::MatrixXd acts = abar * X;
      path_moments[s] = interior_moments(X, acts, mx, acts.rowwise().mean());
      if (next_snap < plan.steps.size() && plan.steps[next_snap] == s) {
        record_snapshot(ens, j, Y, true);
        ++next_snap;
      }

      rng::normals(seed, 1, j, 0, s, z_idio.data(), N);
      rng::normals(seed, 2, j, 0, s, &z_common, 1);
      w0[s + 1] = w0[s] + sqrt_dt * z_common;

      const double mu_t = model.mu(t)(0, 0);
      const double sigma_t = model.sigma(t)(0, 0);
      const double sigma0_t = model.sigma0(t)(0, 0);
      const double drift =
          abar * mu_t - 0.5 * abar * abar * (sigma_t * sigma_t + sigma0_t * sigma0_t);
      Y.array() += dt * drift + sqrt_dt * sigma_t * abar * z_idio.transpose().array() +
                   sqrt_dt * sigma0_t * abar * z_common;
      if (!Y.allFinite()) report_divergence(j, s + 1, ens.times[s + 1]);
    }

    X = Y.array().exp().matrix();
    path_moments[steps] = terminal_moments(X, 1);
    if (next_snap < plan.steps.size() && plan.steps[next_snap] == steps) record_snapshot(ens, j, Y, true);
    ens.terminal_states[j] = X;
  };

  parallel_for(M, resolve_threads(opts.threads, M), run_path);
  return ens;
}

// ---------------------------------------------------------------------------
// Cost estimation

CostSpec CostSpec::lq_at(const LQModel& model, double tau) {
  CostSpec c;
  c.tau = tau;
  c.lq = &model;
  return c;
}

CostSpec CostSpec::nonlq_at(const NonLQModel& model, double tau) {
  CostSpec c;
  c.tau = tau;
  c.nonlq = &model;
  return c;
}

namespace {

double lq_path_cost(const ParticleEnsemble& ens, const LQModel& model, double tau,
                    std::size_t j) {
  const std::size_t steps = ens.steps();
  double acc = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = ens.times[s];
    const StepMoments& sm = ens.moments[j][s];
    double f = model.Q(tau, t).cwiseProduct(sm.xx).sum();
    f += sm.x_mean.dot(model.Qbar(tau, t) * sm.x_mean);
    f += model.R(tau, t).cwiseProduct(sm.aa).sum();
    f += sm.a_mean.dot(model.Rbar(tau, t) * sm.a_mean);
    f += 2.0 * model.M(tau, t).cwiseProduct(sm.xa).sum();
    f += 2.0 * sm.x_mean.dot(model.Mbar(tau, t) * sm.a_mean);
    f += (model.q(tau, t) + model.qbar(tau, t)).col(0).dot(sm.x_mean);
    f += (model.r(tau, t) + model.rbar(tau, t)).col(0).dot(sm.a_mean);
    acc += f * (ens.times[s + 1] - ens.times[s]);
  }
  const StepMoments& tm = ens.moments[j][steps];
  double g = model.P(tau).cwiseProduct(tm.xx).sum();
  g += tm.x_mean.dot(model.Pbar(tau) * tm.x_mean);
  g += (model.p(tau) + model.pbar(tau)).col(0).dot(tm.x_mean);
  return acc + g;
}

double nonlq_path_cost(const ParticleEnsemble& ens, const NonLQModel& model, double tau,
                       std::size_t j) {
  const Eigen::MatrixXd& X = ens.terminal_states[j];
  const double xbar = X.mean();
  if (!(xbar > 0.0)) throw SimulationDiverged("terminal conditional mean is not positive");
  const double scale = std::pow(xbar, model.theta);
  const double a = 1.0 - 1.0 / model.delta;
  double util = 0.0;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const double ratio = X(0, i) / scale;
    util += (model.delta == 1.0) ? std::log(ratio) : std::pow(ratio, a) / a;
  }
  util /= static_cast<double>(X.cols());
  return -model.lambda(model.T - tau) * util;
}

}  // namespace

CostEstimate estimate_cost(const ParticleEnsemble& ensemble, const CostSpec& cost) {
  if ((cost.lq == nullptr) == (cost.nonlq == nullptr))
    throw ModelError("cost spec: exactly one model must be set");
  if (ensemble.M == 0 || ensemble.moments.size() != ensemble.M)
    throw ModelError("cost: ensemble is empty");
  CostEstimate est;
  est.per_path.resize(ensemble.M);
  for (std::size_t j = 0; j < ensemble.M; ++j)
    est.per_path[j] = cost.lq != nullptr ? lq_path_cost(ensemble, *cost.lq, cost.tau, j)
                                         : nonlq_path_cost(ensemble, *cost.nonlq, cost.tau, j);
  double sum = 0.0;
  for (double c : est.per_path) sum += c;
  est.mean = sum / static_cast<double>(ensemble.M);
  if (ensemble.M > 1) {
    double ss = 0.0;
    for (double c : est.per_path) ss += (c - est.mean) * (c - est.mean);
    est.std_error = std::sqrt(ss / static_cast<double>(ensemble.M * (ensemble.M - 1)));
  }
  return est;
}

}  // namespace mfeq
