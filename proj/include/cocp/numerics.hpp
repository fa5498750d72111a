#pragma once

// Scalar numeric utilities shared across the library: overflow-safe logistic
// helpers, bracketed bisection, and adaptive Simpson quadrature.

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cocp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Logistic sigmoid, branch on sign so exp() never overflows.
inline double sigmoid(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// sigma'(z) = sigma(z)(1 - sigma(z)), evaluated as exp(-|z|)/(1+exp(-|z|))^2.
inline double sigmoid_deriv(double z) {
  const double e = std::exp(-std::abs(z));
  const double d = 1.0 + e;
  return e / (d * d);
}

// log(1 + exp(z)) without overflow; softplus(0) = log 2.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// d softplus / dz.
inline double softplus_deriv(double z) { return sigmoid(z); }

struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Root of f on [lo, hi]; requires a sign change. Plain bisection: robust for
// the monotone-through-root functions used here, converges to x_tol.
template <class F>
double bisect_root(F&& f, double lo, double hi, double x_tol, int max_iter,
                   const char* what) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    std::ostringstream os;
    os << what << ": no sign change on [" << lo << ", " << hi << "], f(lo)="
       << flo << ", f(hi)=" << fhi;
    throw NumericsError(os.str());
  }
  double mid = 0.5 * (lo + hi);
  for (int i = 0; i < max_iter && (hi - lo) > x_tol; ++i) {
    mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Smallest x in (lo, hi] with g(x) >= target, for nondecreasing g with
// g(lo) < target <= g(hi). Returns the hi end of the final bracket so the
// result always satisfies g(result) >= target.
template <class G>
double bisect_smallest_at_least(G&& g, double target, double lo, double hi,
                                double x_tol, int max_iter, const char* what) {
  if (g(lo) >= target) return lo;
  if (g(hi) < target) {
    std::ostringstream os;
    os << what << ": g(hi) < target at hi=" << hi;
    throw NumericsError(os.str());
  }
  for (int i = 0; i < max_iter && (hi - lo) > x_tol; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

// Doubles x from start until g(x) >= target; used to bracket quantile-style
// searches before bisecting.
template <class G>
double expand_until(G&& g, double target, double start, double cap,
                    const char* what) {
  double x = start;
  while (g(x) < target) {
    x *= 2.0;
    if (x > cap) {
      std::ostringstream os;
      os << what << ": bracket expansion exceeded cap=" << cap;
      throw NumericsError(os.str());
    }
  }
  return x;
}

struct QuadratureOptions {
  double abs_tol = 1e-9;
  int max_depth = 32;
};

namespace detail {

template <class F>
double simpson_adapt(F& f, double a, double b, double fa, double fm, double fb,
                     double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (fa + 4.0 * flm + fm) * (m - a) / 6.0;
  const double right = (fm + 4.0 * frm + fb) * (b - m) / 6.0;
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return simpson_adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Adaptive Simpson with Richardson correction; absolute tolerance.
template <class F>
double integrate(F&& f, double a, double b, QuadratureOptions opts = {}) {
  if (std::isnan(a) || std::isnan(b) || a > b) {
    std::ostringstream os;
    os << "integrate: bad interval [" << a << ", " << b << "]";
    throw NumericsError(os.str());
  }
  if (a == b) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a);
  const double fm = f(m);
  const double fb = f(b);
  const double whole = (fa + 4.0 * fm + fb) * (b - a) / 6.0;
  return detail::simpson_adapt(f, a, b, fa, fm, fb, whole, opts.abs_tol,
                               opts.max_depth);
}

}  // namespace cocp
