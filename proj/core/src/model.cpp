#include "mfeq/model.hpp"

#include <Eigen/Eigenvalues>
#include <limits>
#include <sstream>

namespace mfeq {

namespace {

constexpr double kEigTol = -1e-10;

void require_shape(const char* name, Eigen::Index r, Eigen::Index c, Eigen::Index er,
                   Eigen::Index ec) {
  if (r != er || c != ec) {
    std::ostringstream os;
    os << name << " has shape " << r << "x" << c << ", expected " << er << "x" << ec;
    throw ModelError(os.str());
  }
}

double min_eigenvalue(const Eigen::MatrixXd& A) {
  const Eigen::MatrixXd S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

void LQModel::validate() const {
  if (!(T > 0.0)) throw ModelError("horizon must be positive");
  const Eigen::Index d = dims.d;
  const Eigen::Index m = dims.m;
  if (d < 1 || m < 1) throw ModelError("state and control dimensions must be >= 1");
  if (dims.n != 1 || dims.k != 1) {
    throw ModelError("this build supports one idiosyncratic and one common Brownian motion (n=k=1)");
  }

  require_shape("b0", b0.rows(), b0.cols(), d, 1);
  require_shape("B", B.rows(), B.cols(), d, d);
  require_shape("Bbar", Bbar.rows(), Bbar.cols(), d, d);
  require_shape("C", C.rows(), C.cols(), d, m);
  require_shape("Cbar", Cbar.rows(), Cbar.cols(), d, m);
  require_shape("theta", theta.rows(), theta.cols(), d, 1);
  require_shape("D", D.rows(), D.cols(), d, d);
  require_shape("Dbar", Dbar.rows(), Dbar.cols(), d, d);
  require_shape("F", F.rows(), F.cols(), d, m);
  require_shape("Fbar", Fbar.rows(), Fbar.cols(), d, m);
  require_shape("theta0", theta0.rows(), theta0.cols(), d, 1);
  require_shape("D0", D0.rows(), D0.cols(), d, d);
  require_shape("D0bar", D0bar.rows(), D0bar.cols(), d, d);
  require_shape("F0", F0.rows(), F0.cols(), d, m);
  require_shape("F0bar", F0bar.rows(), F0bar.cols(), d, m);

  require_shape("Q", Q.rows(), Q.cols(), d, d);
  require_shape("Qbar", Qbar.rows(), Qbar.cols(), d, d);
  require_shape("R", R.rows(), R.cols(), m, m);
  require_shape("Rbar", Rbar.rows(), Rbar.cols(), m, m);
  require_shape("M", M.rows(), M.cols(), d, m);
  require_shape("Mbar", Mbar.rows(), Mbar.cols(), d, m);
  require_shape("q", q.rows(), q.cols(), d, 1);
  require_shape("qbar", qbar.rows(), qbar.cols(), d, 1);
  require_shape("r", r.rows(), r.cols(), m, 1);
  require_shape("rbar", rbar.rows(), rbar.cols(), m, 1);
  require_shape("P", P.rows(), P.cols(), d, d);
  require_shape("Pbar", Pbar.rows(), Pbar.cols(), d, d);
  require_shape("p", p.rows(), p.cols(), d, 1);
  require_shape("pbar", pbar.rows(), pbar.cols(), d, 1);

  for (const TimeFn* f : {&b0, &B, &Bbar, &C, &Cbar, &theta, &D, &Dbar, &F, &Fbar,
                          &theta0, &D0, &D0bar, &F0, &F0bar}) {
    f->validate_continuity();
  }
}

LQModel zero_model(const Dims& dims, double T) {
  LQModel mo;
  mo.dims = dims;
  mo.T = T;
  const Eigen::Index d = dims.d;
  const Eigen::Index m = dims.m;
  mo.b0 = TimeFn::zero(d, 1);
  mo.B = TimeFn::zero(d, d);
  mo.Bbar = TimeFn::zero(d, d);
  mo.C = TimeFn::zero(d, m);
  mo.Cbar = TimeFn::zero(d, m);
  mo.theta = TimeFn::zero(d, 1);
  mo.D = TimeFn::zero(d, d);
  mo.Dbar = TimeFn::zero(d, d);
  mo.F = TimeFn::zero(d, m);
  mo.Fbar = TimeFn::zero(d, m);
  mo.theta0 = TimeFn::zero(d, 1);
  mo.D0 = TimeFn::zero(d, d);
  mo.D0bar = TimeFn::zero(d, d);
  mo.F0 = TimeFn::zero(d, m);
  mo.F0bar = TimeFn::zero(d, m);
  mo.Q = TwoTimeFn::zero(d, d);
  mo.Qbar = TwoTimeFn::zero(d, d);
  mo.R = TwoTimeFn::zero(m, m);
  mo.Rbar = TwoTimeFn::zero(m, m);
  mo.M = TwoTimeFn::zero(d, m);
  mo.Mbar = TwoTimeFn::zero(d, m);
  mo.q = TwoTimeFn::zero(d, 1);
  mo.qbar = TwoTimeFn::zero(d, 1);
  mo.r = TwoTimeFn::zero(m, 1);
  mo.rbar = TwoTimeFn::zero(m, 1);
  mo.P = OneTimeFn::zero(d, d);
  mo.Pbar = OneTimeFn::zero(d, d);
  mo.p = OneTimeFn::zero(d, 1);
  mo.pbar = OneTimeFn::zero(d, 1);
  return mo;
}

std::string ConditionReport::summary() const {
  std::ostringstream os;
  os << (pass ? "pass" : "FAIL");
  for (const auto& c : checks) {
    if (!c.pass) {
      os << "; " << c.name << " min-eig " << c.worst << " at (tau=" << c.at_tau
         << ", t=" << c.at_t << ")";
    }
  }
  return os.str();
}

ConditionReport check_pd_conditions(const LQModel& model, const std::vector<double>& grid,
                                    double delta) {
  ConditionReport report;
  report.delta = delta;
  ConditionCheck cQ{"Q psd"}, cQb{"Q+Qbar psd"}, cR{"R >= delta I"},
      cRb{"R+Rbar >= delta I"}, cP{"P psd"}, cPb{"P+Pbar psd"};
  for (ConditionCheck* c : {&cQ, &cQb, &cR, &cRb, &cP, &cPb}) {
    c->worst = std::numeric_limits<double>::infinity();
  }
  auto track = [](ConditionCheck& c, double ev, double tau, double t) {
    if (ev < c.worst) {
      c.worst = ev;
      c.at_tau = tau;
      c.at_t = t;
    }
    if (ev < kEigTol) c.pass = false;
  };
  const Eigen::Index m = model.dims.m;
  const Eigen::MatrixXd dI = delta * Eigen::MatrixXd::Identity(m, m);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double tau = grid[i];
    for (std::size_t j = i; j < grid.size(); ++j) {
      const double t = grid[j];
      track(cQ, min_eigenvalue(model.Q(tau, t)), tau, t);
      track(cQb, min_eigenvalue(model.Q(tau, t) + model.Qbar(tau, t)), tau, t);
      track(cR, min_eigenvalue(model.R(tau, t) - dI), tau, t);
      track(cRb, min_eigenvalue(model.R(tau, t) + model.Rbar(tau, t) - dI), tau, t);
    }
    track(cP, min_eigenvalue(model.P(tau)), tau, tau);
    track(cPb, min_eigenvalue(model.P(tau) + model.Pbar(tau)), tau, tau);
  }
  report.checks = {cQ, cQb, cR, cRb, cP, cPb};
  for (const auto& c : report.checks) report.pass = report.pass && c.pass;
  return report;
}

ConditionReport check_monotonicity(const LQModel& model, const std::vector<double>& grid) {
  ConditionReport report;
  ConditionCheck cQ{"Q monotone in tau"}, cQb{"Q+Qbar monotone"}, cR{"R monotone"},
      cRb{"R+Rbar monotone"}, cP{"P monotone"}, cPb{"P+Pbar monotone"};
  for (ConditionCheck* c : {&cQ, &cQb, &cR, &cRb, &cP, &cPb}) {
    c->worst = std::numeric_limits<double>::infinity();
  }
  auto track = [](ConditionCheck& c, double ev, double tau, double t) {
    if (ev < c.worst) {
      c.worst = ev;
      c.at_tau = tau;
      c.at_t = t;
    }
    if (ev < kEigTol) c.pass = false;
  };
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double t1 = grid[i];
    const double t2 = grid[i + 1];
    for (std::size_t j = i + 1; j < grid.size(); ++j) {
      const double s = grid[j];
      track(cQ, min_eigenvalue(model.Q(t2, s) - model.Q(t1, s)), t1, s);
      track(cQb, min_eigenvalue(model.Q(t2, s) + model.Qbar(t2, s) - model.Q(t1, s) -
                                model.Qbar(t1, s)),
            t1, s);
      track(cR, min_eigenvalue(model.R(t2, s) - model.R(t1, s)), t1, s);
      track(cRb, min_eigenvalue(model.R(t2, s) + model.Rbar(t2, s) - model.R(t1, s) -
                                model.Rbar(t1, s)),
            t1, s);
    }
    track(cP, min_eigenvalue(model.P(t2) - model.P(t1)), t1, t1);
    track(cPb, min_eigenvalue(model.P(t2) + model.Pbar(t2) - model.P(t1) - model.Pbar(t1)),
          t1, t1);
  }
  report.checks = {cQ, cQb, cR, cRb, cP, cPb};
  for (const auto& c : report.checks) report.pass = report.pass && c.pass;
  return report;
}

}  // namespace mfeq
