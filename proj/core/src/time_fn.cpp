#include "mfeq/time_fn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace mfeq {

// ---------------------------------------------------------------------------
// TimeFn

TimeFn TimeFn::constant(Eigen::MatrixXd value) {
  TimeFn f;
  f.rows_ = value.rows();
  f.cols_ = value.cols();
  f.value_ = std::move(value);
  return f;
}

TimeFn TimeFn::zero(Eigen::Index rows, Eigen::Index cols) {
  return constant(Eigen::MatrixXd::Zero(rows, cols));
}

TimeFn TimeFn::piecewise_poly(std::vector<double> breaks,
                              std::vector<std::vector<Eigen::MatrixXd>> coeffs) {
  if (breaks.size() < 2 || coeffs.size() != breaks.size() - 1) {
    throw ModelError("piecewise TimeFn needs K+1 breakpoints and K segments");
  }
  for (std::size_t j = 0; j + 1 < breaks.size(); ++j) {
    if (!(breaks[j] < breaks[j + 1])) {
      std::ostringstream os;
      os << "segment breakpoints must increase strictly; got " << breaks[j]
         << " then " << breaks[j + 1];
      throw ModelError(os.str());
    }
  }
  TimeFn f;
  for (const auto& seg : coeffs) {
    if (seg.empty() || seg.size() > 4) {
      throw ModelError("polynomial segments take 1 to 4 coefficients (degree <= 3)");
    }
    for (const auto& c : seg) {
      if (f.rows_ == 0 && f.cols_ == 0) {
        f.rows_ = c.rows();
        f.cols_ = c.cols();
      } else if (c.rows() != f.rows_ || c.cols() != f.cols_) {
        throw ModelError("all polynomial coefficients must share one shape");
      }
    }
  }
  f.breaks_ = std::move(breaks);
  f.coeffs_ = std::move(coeffs);
  return f;
}

Eigen::MatrixXd TimeFn::operator()(double t) const {
  if (breaks_.empty()) return value_;
  // Clamp to the covered range; coefficients use local powers.
  std::size_t j = 0;
  if (t >= breaks_.back()) {
    j = coeffs_.size() - 1;
  } else if (t > breaks_.front()) {
    j = static_cast<std::size_t>(
            std::upper_bound(breaks_.begin(), breaks_.end(), t) - breaks_.begin()) -
        1;
    j = std::min(j, coeffs_.size() - 1);
  }
  const double u = t - breaks_[j];
  const auto& seg = coeffs_[j];
  Eigen::MatrixXd out = seg.back();
  for (std::size_t p = seg.size() - 1; p-- > 0;) {
    out = out * u + seg[p];
  }
  return out;
}

bool TimeFn::is_zero() const {
  if (breaks_.empty()) return value_.size() == 0 || value_.isZero(0.0);
  for (const auto& seg : coeffs_) {
    for (const auto& c : seg) {
      if (!c.isZero(0.0)) return false;
    }
  }
  return true;
}

void TimeFn::validate_continuity(double tol) const {
  if (breaks_.empty()) return;
  for (std::size_t j = 0; j + 1 < coeffs_.size(); ++j) {
    const double s = breaks_[j + 1];
    const double u = s - breaks_[j];
    const auto& seg = coeffs_[j];
    Eigen::MatrixXd left = seg.back();
    for (std::size_t p = seg.size() - 1; p-- > 0;) {
      left = left * u + seg[p];
    }
    const Eigen::MatrixXd right = coeffs_[j + 1].front();
    const double gap = (left - right).cwiseAbs().maxCoeff();
    if (gap > tol) {
      std::ostringstream os;
      os << "discontinuity " << gap << " at t=" << s;
      throw ModelError(os.str());
    }
  }
}

// ---------------------------------------------------------------------------
// DiscountFn

DiscountFn::DiscountFn() = default;

DiscountFn DiscountFn::one() { return DiscountFn(); }

DiscountFn DiscountFn::exponential(double rate) {
  DiscountFn f;
  f.kind_ = Kind::Exponential;
  f.a_ = rate;
  return f;
}

DiscountFn DiscountFn::hyperbolic(double a, double b) {
  DiscountFn f;
  f.kind_ = Kind::Hyperbolic;
  f.a_ = a;
  f.b_ = b;
  return f;
}

DiscountFn DiscountFn::power(double exponent) {
  DiscountFn f;
  f.kind_ = Kind::Power;
  f.b_ = exponent;
  return f;
}

DiscountFn DiscountFn::tabulated(std::vector<double> s, std::vector<double> v) {
  if (s.size() != v.size() || s.size() < 2) {
    throw ModelError("tabulated discount needs >= 2 matching nodes");
  }
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (!(s[i] < s[i + 1])) throw ModelError("tabulated discount nodes must increase");
  }
  for (double x : v) {
    if (!(x > 0.0)) throw ModelError("discount values must stay positive");
  }
  DiscountFn f;
  f.kind_ = Kind::Tabulated;
  f.nodes_ = std::move(s);
  f.values_ = std::move(v);
  return f;
}

double DiscountFn::tabulated_eval(double s, bool deriv) const {
  const auto& xs = nodes_;
  const auto& ys = values_;
  const std::size_t n = xs.size();
  double t = std::clamp(s, xs.front(), xs.back());
  std::size_t j = 0;
  if (t >= xs[n - 2]) {
    j = n - 2;
  } else if (t > xs.front()) {
    j = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), t) - xs.begin()) - 1;
  }
  const double h = xs[j + 1] - xs[j];
  const double u = (t - xs[j]) / h;
  // Catmull-Rom tangents, one-sided at the ends.
  auto slope = [&](std::size_t i) {
    if (i == 0) return (ys[1] - ys[0]) / (xs[1] - xs[0]);
    if (i == n - 1) return (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
    return (ys[i + 1] - ys[i - 1]) / (xs[i + 1] - xs[i - 1]);
  };
  const double m0 = slope(j) * h;
  const double m1 = slope(j + 1) * h;
  const double y0 = ys[j];
  const double y1 = ys[j + 1];
  if (!deriv) {
    const double u2 = u * u;
    const double u3 = u2 * u;
    return (2 * u3 - 3 * u2 + 1) * y0 + (u3 - 2 * u2 + u) * m0 +
           (-2 * u3 + 3 * u2) * y1 + (u3 - u2) * m1;
  }
  const double u2 = u * u;
  return ((6 * u2 - 6 * u) * y0 + (3 * u2 - 4 * u + 1) * m0 + (-6 * u2 + 6 * u) * y1 +
          (3 * u2 - 2 * u) * m1) /
         h;
}

double DiscountFn::operator()(double s) const {
  switch (kind_) {
    case Kind::One:
      return 1.0;
    case Kind::Exponential:
      return std::exp(-a_ * s);
    case Kind::Hyperbolic:
      return std::pow(1.0 + a_ * s, -b_);
    case Kind::Power:
      return std::pow(1.0 + s, -b_);
    case Kind::Tabulated:
      return tabulated_eval(s, false);
  }
  return 1.0;
}

double DiscountFn::derivative(double s) const {
  switch (kind_) {
    case Kind::One:
      return 0.0;
    case Kind::Exponential:
      return -a_ * std::exp(-a_ * s);
    case Kind::Hyperbolic:
      return -a_ * b_ * std::pow(1.0 + a_ * s, -b_ - 1.0);
    case Kind::Power:
      return -b_ * std::pow(1.0 + s, -b_ - 1.0);
    case Kind::Tabulated:
      return tabulated_eval(s, true);
  }
  return 0.0;
}

namespace {
double dense_sup(const std::function<double(double)>& f, double span) {
  const int n = 2048;
  double best = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double s = span * static_cast<double>(i) / n;
    best = std::max(best, std::abs(f(s)));
  }
  return best;
}
}  // namespace

double DiscountFn::sup_abs(double span) const {
  return dense_sup([this](double s) { return (*this)(s); }, span);
}

double DiscountFn::sup_abs_derivative(double span) const {
  return dense_sup([this](double s) { return derivative(s); }, span);
}

double DiscountFn::sup_abs_inverse(double span) const {
  return dense_sup([this](double s) { return 1.0 / (*this)(s); }, span);
}

// ---------------------------------------------------------------------------
// TwoTimeFn

TwoTimeFn TwoTimeFn::tau_independent(TimeFn K0) {
  TwoTimeFn f;
  f.kind_ = Kind::TauIndependent;
  f.rows_ = K0.rows();
  f.cols_ = K0.cols();
  f.base_ = std::move(K0);
  return f;
}

TwoTimeFn TwoTimeFn::discounted_separable(DiscountFn lambda, TimeFn K0) {
  TwoTimeFn f;
  f.kind_ = Kind::Separable;
  f.rows_ = K0.rows();
  f.cols_ = K0.cols();
  f.lambda_ = std::move(lambda);
  f.base_ = std::move(K0);
  return f;
}

TwoTimeFn TwoTimeFn::tabulated(std::vector<double> nodes,
                               std::vector<std::vector<Eigen::MatrixXd>> values) {
  if (nodes.size() < 2 || values.size() != nodes.size()) {
    throw ModelError("tabulated kernel needs one row of values per node");
  }
  TwoTimeFn f;
  f.kind_ = Kind::Tabulated;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].size() != nodes.size() - i) {
      throw ModelError("tabulated kernel row i must list values for t_i..t_N");
    }
    for (const auto& v : values[i]) {
      if (f.rows_ == 0 && f.cols_ == 0) {
        f.rows_ = v.rows();
        f.cols_ = v.cols();
      } else if (v.rows() != f.rows_ || v.cols() != f.cols_) {
        throw ModelError("tabulated kernel values must share one shape");
      }
    }
  }
  f.nodes_ = std::move(nodes);
  f.values_ = std::move(values);
  return f;
}

TwoTimeFn TwoTimeFn::zero(Eigen::Index rows, Eigen::Index cols) {
  return tau_independent(TimeFn::zero(rows, cols));
}

Eigen::MatrixXd TwoTimeFn::operator()(double tau, double t) const {
  const double te = std::max(t, tau);  // extension K(tau;t)=K(tau;tau) for t<tau
  switch (kind_) {
    case Kind::TauIndependent:
      return base_(te);
    case Kind::Separable:
      return lambda_(te - tau) * base_(te);
    case Kind::Tabulated:
      break;
  }
  // Bilinear interpolation over the structured triangle; values below the
  // diagonal are supplied by the extension convention.
  const auto& xs = nodes_;
  const std::size_t n = xs.size();
  auto locate = [&](double x) {
    x = std::clamp(x, xs.front(), xs.back());
    std::size_t j = 0;
    if (x >= xs[n - 2]) {
      j = n - 2;
    } else if (x > xs.front()) {
      j = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
    }
    return std::make_pair(j, (std::clamp(x, xs.front(), xs.back()) - xs[j]) / (xs[j + 1] - xs[j]));
  };
  auto node_value = [&](std::size_t i, std::size_t j) -> const Eigen::MatrixXd& {
    if (j < i) j = i;  // extension below the diagonal
    return values_[i][j - i];
  };
  const auto [i0, a] = locate(tau);
  const auto [j0, b] = locate(te);
  return (1 - a) * (1 - b) * node_value(i0, j0) + (1 - a) * b * node_value(i0, j0 + 1) +
         a * (1 - b) * node_value(i0 + 1, j0) + a * b * node_value(i0 + 1, j0 + 1);
}

bool TwoTimeFn::is_zero() const {
  switch (kind_) {
    case Kind::TauIndependent:
    case Kind::Separable:
      return base_.is_zero();
    case Kind::Tabulated:
      for (const auto& row : values_) {
        for (const auto& v : row) {
          if (!v.isZero(0.0)) return false;
        }
      }
      return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// OneTimeFn

OneTimeFn OneTimeFn::plain(TimeFn K0) {
  OneTimeFn f;
  f.rows_ = K0.rows();
  f.cols_ = K0.cols();
  f.base_ = std::move(K0);
  return f;
}

OneTimeFn OneTimeFn::discounted_separable(DiscountFn lambda, TimeFn K0, double horizon) {
  OneTimeFn f;
  f.separable_ = true;
  f.rows_ = K0.rows();
  f.cols_ = K0.cols();
  f.lambda_ = std::move(lambda);
  f.base_ = std::move(K0);
  f.horizon_ = horizon;
  return f;
}

OneTimeFn OneTimeFn::zero(Eigen::Index rows, Eigen::Index cols) {
  return plain(TimeFn::zero(rows, cols));
}

Eigen::MatrixXd OneTimeFn::operator()(double tau) const {
  if (!separable_) return base_(tau);
  return lambda_(horizon_ - tau) * base_(tau);
}

bool OneTimeFn::is_zero() const { return base_.is_zero(); }

}  // namespace mfeq
