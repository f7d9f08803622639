#ifndef MFEQ_SIMULATE_HPP
#define MFEQ_SIMULATE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mfeq/equilibrium.hpp"
#include "mfeq/model.hpp"
#include "mfeq/model_io.hpp"

namespace mfeq {

/// Initial state law xi.  For LogNormal the (mean, cov) fields parameterize
/// the law of log X.
struct InitialLaw {
  enum class Kind { Gaussian, Point, LogNormal };
  Kind kind = Kind::Point;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  static InitialLaw gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);
  static InitialLaw point(Eigen::VectorXd x);
  static InitialLaw lognormal(Eigen::VectorXd log_mean, Eigen::MatrixXd log_cov);

  /// Exact first and second moments of the law itself.
  MeasureMoments moments() const;
};

/// Closed-loop strategy specification: equilibrium feedback, a fixed affine
/// map, a scalar-linear rule a = slope(t) x, or a spiked composition equal to
/// one strategy on a window [t, t+eps) and another elsewhere.
class StrategySpec {
 public:
  enum class Kind { LqFeedback, AffineOverride, Spiked, ScalarLinear };

  static StrategySpec lq_feedback(FeedbackStrategy strategy);
  static StrategySpec affine_override(AffinePerturbation v);
  static StrategySpec scalar_linear(std::function<double(double)> slope);

  Kind kind() const { return kind_; }

  /// Actions for all particles at once: X is d x N, mean is the per-path
  /// empirical mean; returns m x N.
  Eigen::MatrixXd actions(double t, const Eigen::MatrixXd& X,
                          const Eigen::VectorXd& mean) const;

  /// Single-particle convenience wrapper.
  Eigen::VectorXd action(double t, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& mean) const;

  /// True when every branch reachable at some time is scalar-linear (the
  /// admissible class of the multiplicative model).
  bool scalar_linear_only() const;

  /// Effective slope at time t; only valid when scalar_linear_only().
  double slope(double t) const;

  friend StrategySpec spike(const StrategySpec& base, const StrategySpec& v, double t,
                            double eps, double horizon);

 private:
  Kind kind_ = Kind::AffineOverride;
  std::shared_ptr<const FeedbackStrategy> feedback_;
  AffinePerturbation affine_;
  std::function<double(double)> slope_;
  std::shared_ptr<const StrategySpec> base_, spike_;
  double spike_t_ = 0.0, spike_eps_ = 0.0;
};

/// The spiked strategy alpha_{t,eps,v}: plays `v` on [t, t+eps) and `base`
/// elsewhere.  Requires eps > 0 and [t, t+eps) contained in [0, horizon).
StrategySpec spike(const StrategySpec& base, const StrategySpec& v, double t, double eps,
                   double horizon);

/// Per-path, per-step empirical moments of (state, control): means and raw
/// second moments over the N particles of one common-noise path.
struct StepMoments {
  Eigen::VectorXd x_mean, a_mean;
  Eigen::MatrixXd xx, xa, aa;  // E[x x'], E[x a'], E[a a'] under the empirical law
};

/// Result of an interacting-particle run: M independent common-noise paths,
/// each carrying N particles that share the path's common increments.  Full
/// states are kept at the terminal time (and at optional snapshot steps); the
/// trajectory itself is summarized by per-step empirical moments, which are
/// sufficient statistics for every quadratic cost.
struct ParticleEnsemble {
  std::size_t N = 0, M = 0;
  double t0 = 0.0, T = 0.0, dt = 0.0;
  std::uint64_t seed = 0;
  Eigen::Index d = 1, m = 1;
  bool log_coords = false;  // multiplicative model simulated in log scale

  std::vector<double> times;                      // steps + 1 entries
  std::vector<std::vector<StepMoments>> moments;  // [path][step]
  std::vector<Eigen::MatrixXd> terminal_states;   // [path], d x N
  std::vector<std::vector<double>> w0;            // [path], cumulative common noise

  std::vector<std::size_t> snapshot_steps;
  std::vector<std::vector<Eigen::MatrixXd>> snapshots;  // [path][snapshot], d x kept
  std::size_t snapshot_particles = 0;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
};

/// Samples of one common-noise path at one time, with derived moments.
struct EmpiricalMeasure {
  Eigen::MatrixXd samples;  // d x N
  MeasureMoments moments() const;
};

struct SimOptions {
  int threads = 0;                  // 0 = hardware concurrency
  std::size_t snapshot_every = 0;   // keep full states every this many steps (0: none)
  std::size_t snapshot_particles = 0;  // cap on particles per snapshot (0: all)
};

/// Euler-Maruyama simulation of the conditional McKean-Vlasov dynamics with
/// the conditional law replaced by the per-path empirical law.  Deterministic
/// in (seed, N, M, dt) regardless of thread count: every increment comes from
/// a counter-based generator addressed by (path, particle, step).
ParticleEnsemble simulate(const LQModel& model, const StrategySpec& strategy,
                          const InitialLaw& init, double t0, std::size_t N, std::size_t M,
                          double dt, std::uint64_t seed, const SimOptions& opts = {});

/// The multiplicative model, simulated in log coordinates so positivity is
/// exact.  The strategy must be scalar-linear (possibly spiked within the
/// class); the initial law must be supported on positive reals.
ParticleEnsemble simulate(const NonLQModel& model, const StrategySpec& strategy,
                          const InitialLaw& init, double t0, std::size_t N, std::size_t M,
                          double dt, std::uint64_t seed, const SimOptions& opts = {});

/// Cost evaluation target: quadratic kernels of an LQModel or the relative
/// performance objective of the multiplicative model, anchored at tau.
struct CostSpec {
  double tau = 0.0;
  const LQModel* lq = nullptr;
  const NonLQModel* nonlq = nullptr;

  static CostSpec lq_at(const LQModel& model, double tau);
  static CostSpec nonlq_at(const NonLQModel& model, double tau);
};

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;           // across common-noise paths
  std::vector<double> per_path;
};

/// Per-path cost = running-cost quadrature over the stored empirical moments
/// plus the terminal cost, averaged across paths; the standard error is taken
/// across paths because common-noise variance dominates.
CostEstimate estimate_cost(const ParticleEnsemble& ensemble, const CostSpec& cost);

}  // namespace mfeq

#endif  // MFEQ_SIMULATE_HPP
