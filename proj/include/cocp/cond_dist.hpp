#pragma once

// Conditional distribution families used by the synthetic benchmarks, plus
// the interval geometry built on them: highest-density intervals, the
// smallest radius covering 1-alpha of the folded residual |Y - c|, the
// endpoint-density formula for its derivative, logistic-kernel smoothing of
// the conditional density, and the smoothed-objective oracle center.
//
// All families share the location curve theta(x) = 0.5 sin(1.5x) and scale
// curve s(x) = 0.15 + 0.25 x^2 over x in [-2, 2]:
//   normal:      Y = theta + s * eps,                      eps ~ N(0, 1)
//   exponential: Y = theta + s * eps,                      eps ~ Exp(1)
//   lognormal:   Y = theta + s * (eps - exp(-sigma^2)),    eps ~ LogNormal(0, sigma^2)
// The lognormal shift puts the density mode exactly at theta.

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cocp/numerics.hpp"
#include "cocp/rng.hpp"

namespace cocp {

inline constexpr double kSqrt2 = 1.4142135623730951;
inline constexpr double kSqrt2Pi = 2.5066282746310002;

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  }
  return -kSqrt2 * boost::math::erfc_inv(2.0 * p);
}

enum class FamilyKind { normal, lognormal, exponential };

inline std::string family_name(FamilyKind k) {
  switch (k) {
    case FamilyKind::normal: return "normal";
    case FamilyKind::lognormal: return "lognormal";
    case FamilyKind::exponential: return "exponential";
  }
  throw std::invalid_argument("family_name: unknown family");
}

inline FamilyKind family_from_name(const std::string& name) {
  if (name == "normal") return FamilyKind::normal;
  if (name == "lognormal") return FamilyKind::lognormal;
  if (name == "exponential") return FamilyKind::exponential;
  throw std::invalid_argument("family_from_name: unknown family '" + name + "'");
}

struct ConditionalFamily {
  FamilyKind kind = FamilyKind::normal;
  double lognormal_sigma = 0.6;

  double location(double x) const { return 0.5 * std::sin(1.5 * x); }
  double scale(double x) const { return 0.15 + 0.25 * x * x; }

  // exp(-sigma^2): the mode of LogNormal(0, sigma^2), subtracted so the
  // shifted density peaks at theta(x).
  double lognormal_mode_shift() const {
    return std::exp(-lognormal_sigma * lognormal_sigma);
  }

  double support_lower(double x) const {
    switch (kind) {
      case FamilyKind::normal: return -kInf;
      case FamilyKind::exponential: return location(x);
      case FamilyKind::lognormal:
        return location(x) - scale(x) * lognormal_mode_shift();
    }
    throw std::invalid_argument("support_lower: unknown family");
  }

  double mode(double x) const { return location(x); }

  // Density maximum, analytic at the mode.
  double max_density(double x) const {
    const double s = scale(x);
    switch (kind) {
      case FamilyKind::normal: return 1.0 / (s * kSqrt2Pi);
      case FamilyKind::exponential: return 1.0 / s;
      case FamilyKind::lognormal: {
        const double sig = lognormal_sigma;
        return std::exp(0.5 * sig * sig) / (s * sig * kSqrt2Pi);
      }
    }
    throw std::invalid_argument("max_density: unknown family");
  }

  double pdf(double x, double y) const {
    const double th = location(x);
    const double s = scale(x);
    switch (kind) {
      case FamilyKind::normal: {
        const double z = (y - th) / s;
        return std::exp(-0.5 * z * z) / (s * kSqrt2Pi);
      }
      case FamilyKind::exponential: {
        if (y < th) return 0.0;
        return std::exp(-(y - th) / s) / s;
      }
      case FamilyKind::lognormal: {
        const double u = (y - th) / s + lognormal_mode_shift();
        if (!(u > 0.0)) return 0.0;
        const double sig = lognormal_sigma;
        const double lu = std::log(u);
        return std::exp(-0.5 * lu * lu / (sig * sig)) / (s * u * sig * kSqrt2Pi);
      }
    }
    throw std::invalid_argument("pdf: unknown family");
  }

  double cdf(double x, double y) const {
    const double th = location(x);
    const double s = scale(x);
    switch (kind) {
      case FamilyKind::normal:
        return normal_cdf((y - th) / s);
      case FamilyKind::exponential:
        if (y <= th) return 0.0;
        return -std::expm1(-(y - th) / s);
      case FamilyKind::lognormal: {
        const double u = (y - th) / s + lognormal_mode_shift();
        if (!(u > 0.0)) return 0.0;
        return normal_cdf(std::log(u) / lognormal_sigma);
      }
    }
    throw std::invalid_argument("cdf: unknown family");
  }

  double quantile(double x, double p) const {
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("quantile: p must be in (0,1)");
    }
    const double th = location(x);
    const double s = scale(x);
    switch (kind) {
      case FamilyKind::normal:
        return th + s * normal_quantile(p);
      case FamilyKind::exponential:
        return th - s * std::log1p(-p);
      case FamilyKind::lognormal:
        return th + s * (std::exp(lognormal_sigma * normal_quantile(p)) -
                         lognormal_mode_shift());
    }
    throw std::invalid_argument("quantile: unknown family");
  }

  double sample(double x, Rng& rng) const {
    const double th = location(x);
    const double s = scale(x);
    switch (kind) {
      case FamilyKind::normal: {
        std::normal_distribution<double> gauss(0.0, 1.0);
        return th + s * gauss(rng);
      }
      case FamilyKind::exponential: {
        std::exponential_distribution<double> expo(1.0);
        return th + s * expo(rng);
      }
      case FamilyKind::lognormal: {
        std::normal_distribution<double> gauss(0.0, 1.0);
        return th + s * (std::exp(lognormal_sigma * gauss(rng)) -
                         lognormal_mode_shift());
      }
    }
    throw std::invalid_argument("sample: unknown family");
  }
};

struct HdiResult {
  double lower = 0.0;
  double upper = 0.0;
  double center = 0.0;
  double radius = 0.0;
  bool boundary_pinned = false;
};

namespace detail {

inline void check_alpha(double alpha, const char* what) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument(std::string(what) + ": alpha must be in (0,1)");
  }
}

// Interior highest-density interval by bisection on the density level: for a
// level lambda the interval is bounded by the two roots of f = lambda, one on
// each monotone branch around the mode; the enclosed mass is decreasing in
// lambda.
inline HdiResult lognormal_hdi(const ConditionalFamily& fam, double x,
                               double alpha) {
  const double a = fam.support_lower(x);
  const double mode = fam.mode(x);
  const double fmax = fam.max_density(x);
  const double target = 1.0 - alpha;
  const double y_tol = 1e-12 * std::max(1.0, fam.scale(x));

  double upper_cap = fam.quantile(x, 1.0 - 1e-13);
  auto endpoints_at = [&](double lam, double& lo, double& hi) {
    lo = bisect_root(
        [&](double y) { return fam.pdf(x, y) - lam; }, a, mode, y_tol, 200,
        "hdi left branch");
    double cap = upper_cap;
    while (fam.pdf(x, cap) >= lam) cap = mode + 2.0 * (cap - mode);
    hi = bisect_root(
        [&](double y) { return fam.pdf(x, y) - lam; }, mode, cap, y_tol, 200,
        "hdi right branch");
  };

  double lam_lo = 1e-9 * fmax;   // mass ~ 1
  double lam_hi = (1.0 - 1e-12) * fmax;  // mass ~ 0
  double lo = a, hi = mode;
  for (int it = 0; it < 200; ++it) {
    const double lam = 0.5 * (lam_lo + lam_hi);
    endpoints_at(lam, lo, hi);
    const double mass = fam.cdf(x, hi) - fam.cdf(x, lo);
    if (std::abs(mass - target) <= 1e-10) break;
    if (mass > target) {
      lam_lo = lam;
    } else {
      lam_hi = lam;
    }
    if (lam_hi - lam_lo <= 1e-15 * fmax) break;
  }
  HdiResult r;
  r.lower = lo;
  r.upper = hi;
  r.center = 0.5 * (lo + hi);
  r.radius = 0.5 * (hi - lo);
  r.boundary_pinned = false;
  return r;
}

}  // namespace detail

// Shortest interval holding 1-alpha of the conditional mass. Closed form for
// the symmetric normal and for the exponential (monotone density, interval
// pinned at the support edge); level-set bisection for the lognormal.
inline HdiResult oracle_hdi(const ConditionalFamily& fam, double x,
                            double alpha) {
  detail::check_alpha(alpha, "oracle_hdi");
  const double th = fam.location(x);
  const double s = fam.scale(x);
  switch (fam.kind) {
    case FamilyKind::normal: {
      const double z = normal_quantile(1.0 - 0.5 * alpha);
      HdiResult r;
      r.lower = th - z * s;
      r.upper = th + z * s;
      r.center = th;
      r.radius = z * s;
      r.boundary_pinned = false;
      return r;
    }
    case FamilyKind::exponential: {
      HdiResult r;
      r.lower = th;
      r.upper = fam.quantile(x, 1.0 - alpha);
      r.center = 0.5 * (r.lower + r.upper);
      r.radius = 0.5 * (r.upper - r.lower);
      r.boundary_pinned = true;
      return r;
    }
    case FamilyKind::lognormal:
      return detail::lognormal_hdi(fam, x, alpha);
  }
  throw std::invalid_argument("oracle_hdi: unknown family");
}

// Smallest r >= 0 with P(|Y - c| <= r | X = x) >= 1 - alpha, i.e. the
// (1-alpha)-quantile of the folded residual |Y - c|.
inline double folded_radius(const ConditionalFamily& fam, double x, double c,
                            double alpha) {
  detail::check_alpha(alpha, "folded_radius");
  const double target = 1.0 - alpha;
  auto mass = [&](double r) { return fam.cdf(x, c + r) - fam.cdf(x, c - r); };
  const double start =
      std::max(fam.scale(x), std::abs(c - fam.location(x)) + fam.scale(x));
  const double hi = expand_until(mass, target, start, 1e12, "folded_radius");
  return bisect_smallest_at_least(mass, target, 0.0, hi, 1e-10, 200,
                                  "folded_radius");
}

// d/dc of folded_radius via the endpoint densities:
//   psi'(c) = -(f(c + psi) - f(c - psi)) / (f(c + psi) + f(c - psi)).
// Vanishing endpoint densities make the slope ill-defined; report that as a
// numeric error instead of dividing by ~0.
inline double push_pull_derivative(const ConditionalFamily& fam, double x,
                                   double c, double alpha) {
  const double r = folded_radius(fam, x, c, alpha);
  const double f_up = fam.pdf(x, c + r);
  const double f_dn = fam.pdf(x, c - r);
  const double denom = f_up + f_dn;
  if (!(denom > 1e-12 * fam.max_density(x))) {
    std::ostringstream os;
    os << "push_pull_derivative: endpoint densities vanish at x=" << x
       << ", c=" << c << " (f- =" << f_dn << ", f+ =" << f_up << ")";
    throw NumericsError(os.str());
  }
  return -(f_up - f_dn) / denom;
}

// Convolution of the conditional density with the logistic smoothing kernel
// K_beta(u) = sigmoid'(u/beta)/beta, by adaptive quadrature over the +-40
// beta window where the kernel carries all but ~1e-17 of its mass, truncated
// at the support edge.
inline double smoothed_pdf(const ConditionalFamily& fam, double x, double z,
                           double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smoothed_pdf: beta must be positive");
  const double w = 40.0 * beta;
  const double a = fam.support_lower(x);
  double u_hi = w;
  if (std::isfinite(a)) u_hi = std::min(u_hi, z - a);
  if (u_hi <= -w) return 0.0;
  auto integrand = [&](double u) {
    return sigmoid_deriv(u / beta) / beta * fam.pdf(x, z - u);
  };
  return integrate(integrand, -w, u_hi, QuadratureOptions{1e-9, 32});
}

// Exact partial derivative wrt the center of the smoothed coverage objective
//   Phi(c, r) = E[sigmoid((r - |Y - c|)/beta) | X = x],
// evaluated by quadrature of d/dc sigmoid((r - |y - c|)/beta) f(y) dy. The
// integrand lives in +-40 beta windows around the interval endpoints; the
// windows are merged (with a split at the kink y = c) when they overlap.
inline double soft_coverage_center_gradient(const ConditionalFamily& fam,
                                            double x, double c, double r,
                                            double beta) {
  if (!(beta > 0.0)) {
    throw std::invalid_argument("soft_coverage_center_gradient: beta must be positive");
  }
  if (!(r >= 0.0)) {
    throw std::invalid_argument("soft_coverage_center_gradient: radius must be >= 0");
  }
  const double w = 40.0 * beta;
  const double a = fam.support_lower(x);
  auto integrand = [&](double y) {
    const double d = y - c;
    const double zarg = (r - std::abs(d)) / beta;
    const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    return sigmoid_deriv(zarg) / beta * sign * fam.pdf(x, y);
  };
  const QuadratureOptions opts{1e-9, 36};
  auto piece = [&](double lo, double hi) {
    if (std::isfinite(a)) lo = std::max(lo, a);
    if (hi <= lo) return 0.0;
    return integrate(integrand, lo, hi, opts);
  };
  if (r > 2.0 * w) {
    // windows around c - r and c + r are disjoint
    return piece(c - r - w, c - r + w) + piece(c + r - w, c + r + w);
  }
  return piece(c - r - w, c) + piece(c, c + r + w);
}

struct SoftOracle {
  double center = 0.0;
  double radius = 0.0;
};

// Center where the smoothed coverage objective is stationary subject to the
// radius tracking folded_radius(center); the target of the alternating
// scheme at smoothing level beta. Bracketed by a sign scan around the exact
// interval center, then bisected.
inline SoftOracle beta_soft_oracle(const ConditionalFamily& fam, double x,
                                   double alpha, double beta) {
  detail::check_alpha(alpha, "beta_soft_oracle");
  if (!(beta > 0.0)) throw std::invalid_argument("beta_soft_oracle: beta must be positive");
  const HdiResult hdi = oracle_hdi(fam, x, alpha);
  auto grad = [&](double c) {
    return soft_coverage_center_gradient(fam, x, c,
                                         folded_radius(fam, x, c, alpha), beta);
  };
  const double span = hdi.radius + 20.0 * beta;
  const int n_grid = 33;
  double prev_c = hdi.center - span;
  double prev_g = grad(prev_c);
  double lo = 0.0, hi = 0.0;
  bool bracketed = false;
  for (int i = 1; i < n_grid; ++i) {
    const double ci = hdi.center - span + 2.0 * span * double(i) / double(n_grid - 1);
    const double gi = grad(ci);
    if (prev_g == 0.0 || (prev_g > 0.0) != (gi > 0.0)) {
      lo = prev_c;
      hi = ci;
      bracketed = true;
      break;
    }
    prev_c = ci;
    prev_g = gi;
  }
  if (!bracketed) {
    std::ostringstream os;
    os << "beta_soft_oracle: no sign change of the center gradient on ["
       << hdi.center - span << ", " << hdi.center + span << "] at x=" << x
       << ", beta=" << beta;
    throw NumericsError(os.str());
  }
  SoftOracle res;
  res.center = bisect_root(grad, lo, hi, 1e-10, 200, "beta_soft_oracle");
  res.radius = folded_radius(fam, x, res.center, alpha);
  return res;
}

}  // namespace cocp
