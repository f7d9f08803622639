#ifndef MFEQ_QUADRATURE_HPP
#define MFEQ_QUADRATURE_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace mfeq {

/// Adaptive Simpson quadrature on [a, b] with absolute tolerance `tol`.
/// Recursion depth is capped; the cap is generous enough that smooth
/// integrands reach tolerance long before hitting it.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double tol = 1e-10);

/// Composite Simpson on n equal cells of [a, b] (2n+1 evaluations).
double integrate_composite(const std::function<double(double)>& f, double a, double b,
                           std::size_t n);

namespace detail {

inline double simpson_step(const std::function<double(double)>& f, double a, double b,
                           double fa, double fm, double fb, double whole, double tol,
                           int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

inline double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                 double tol) {
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a);
  const double fm = f(m);
  const double fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, 48);
}

inline double integrate_composite(const std::function<double(double)>& f, double a, double b,
                                  std::size_t n) {
  if (n == 0 || a == b) return 0.0;
  const double h = (b - a) / static_cast<double>(n);
  double sum = f(a) + f(b);
  for (std::size_t i = 0; i < n; ++i) {
    const double left = a + static_cast<double>(i) * h;
    sum += 4.0 * f(left + 0.5 * h);
    if (i > 0) sum += 2.0 * f(left);
  }
  return sum * h / 6.0;
}

}  // namespace mfeq

#endif  // MFEQ_QUADRATURE_HPP
