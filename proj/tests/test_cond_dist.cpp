// Closed-form family checks against values computed independently with
// scipy (fsolve/brentq/quad at tolerances 1e-12 or tighter).

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "cocp/cond_dist.hpp"
#include "cocp/rng.hpp"

namespace {

cocp::ConditionalFamily family(cocp::FamilyKind k) {
  cocp::ConditionalFamily f;
  f.kind = k;
  return f;
}

constexpr double kAlpha = 0.1;
constexpr double kX = 0.3;
constexpr double kTheta = 0.217482767056;   // 0.5 sin(0.45)
constexpr double kScale = 0.1725;           // 0.15 + 0.25 * 0.09

}  // namespace

TEST_CASE("normal cdf and quantile spot values") {
  CHECK(cocp::normal_cdf(1.2) == Catch::Approx(0.884930329778292).margin(1e-14));
  CHECK(cocp::normal_quantile(0.975) ==
        Catch::Approx(1.959963984540054).margin(1e-12));
  CHECK(cocp::normal_quantile(0.95) ==
        Catch::Approx(1.644853626951).margin(1e-11));
  CHECK(cocp::normal_quantile(cocp::normal_cdf(0.37)) ==
        Catch::Approx(0.37).margin(1e-12));
}

TEST_CASE("family names round trip") {
  for (auto k : {cocp::FamilyKind::normal, cocp::FamilyKind::exponential,
                 cocp::FamilyKind::lognormal}) {
    CHECK(cocp::family_from_name(cocp::family_name(k)) == k);
  }
  CHECK_THROWS_AS(cocp::family_from_name("cauchy"), std::invalid_argument);
}

TEST_CASE("location scale and support") {
  const auto f = family(cocp::FamilyKind::lognormal);
  CHECK(f.location(kX) == Catch::Approx(kTheta).margin(1e-12));
  CHECK(f.scale(kX) == Catch::Approx(kScale).margin(1e-15));
  CHECK(f.lognormal_mode_shift() ==
        Catch::Approx(0.697676326071).margin(1e-12));
  CHECK(f.support_lower(kX) ==
        Catch::Approx(kTheta - kScale * 0.697676326071).margin(1e-12));
  CHECK(family(cocp::FamilyKind::exponential).support_lower(kX) ==
        Catch::Approx(kTheta).margin(1e-12));
  CHECK(family(cocp::FamilyKind::normal).support_lower(kX) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("pdf and cdf spot values") {
  const double y = kTheta + 0.2;
  CHECK(family(cocp::FamilyKind::normal).pdf(kX, y) ==
        Catch::Approx(1.180917649175).margin(1e-9));
  CHECK(family(cocp::FamilyKind::exponential).pdf(kX, y) ==
        Catch::Approx(1.818365012683).margin(1e-9));
  CHECK(family(cocp::FamilyKind::lognormal).pdf(kX, y) ==
        Catch::Approx(1.219008916113).margin(1e-9));
  CHECK(family(cocp::FamilyKind::lognormal).cdf(kX, y) ==
        Catch::Approx(0.848891438905).margin(1e-10));
  // outside the support
  const auto ln = family(cocp::FamilyKind::lognormal);
  CHECK(ln.pdf(kX, ln.support_lower(kX) - 0.01) == 0.0);
  CHECK(ln.cdf(kX, ln.support_lower(kX) - 0.01) == 0.0);
  CHECK(family(cocp::FamilyKind::exponential).pdf(kX, kTheta - 0.01) == 0.0);
}

TEST_CASE("pdf integrates to one and matches the cdf derivative") {
  cocp::QuadratureOptions opts;
  for (auto k : {cocp::FamilyKind::normal, cocp::FamilyKind::exponential,
                 cocp::FamilyKind::lognormal}) {
    const auto f = family(k);
    const double lo = std::max(f.support_lower(0.7), f.location(0.7) - 12.0);
    const double hi = f.quantile(0.7, 1.0 - 1e-12);
    const double mass = cocp::integrate(
        [&](double y) { return f.pdf(0.7, y); }, lo, hi, opts);
    CHECK(mass == Catch::Approx(1.0).margin(1e-7));
    // central difference of the cdf
    const double y0 = f.location(0.7) + 0.12;
    const double fd =
        (f.cdf(0.7, y0 + 1e-6) - f.cdf(0.7, y0 - 1e-6)) / 2e-6;
    CHECK(f.pdf(0.7, y0) == Catch::Approx(fd).margin(1e-6));
  }
}

TEST_CASE("quantile inverts the cdf") {
  CHECK(family(cocp::FamilyKind::lognormal).quantile(kX, 0.35) ==
        Catch::Approx(0.234027334263).margin(1e-9));
  for (auto k : {cocp::FamilyKind::normal, cocp::FamilyKind::exponential,
                 cocp::FamilyKind::lognormal}) {
    const auto f = family(k);
    for (double p : {0.05, 0.3, 0.71, 0.99}) {
      CHECK(f.cdf(-1.2, f.quantile(-1.2, p)) == Catch::Approx(p).margin(1e-9));
    }
  }
}

TEST_CASE("max_density bounds the pdf and is attained at the mode") {
  for (auto k : {cocp::FamilyKind::normal, cocp::FamilyKind::exponential,
                 cocp::FamilyKind::lognormal}) {
    const auto f = family(k);
    const double fmax = f.max_density(kX);
    double seen = 0.0;
    for (int i = 0; i <= 400; ++i) {
      const double y = kTheta - 1.0 + 2.0 * i / 400.0;
      seen = std::max(seen, f.pdf(kX, y));
      CHECK(f.pdf(kX, y) <= fmax * (1.0 + 1e-12));
    }
    CHECK(seen >= 0.9 * fmax);
  }
  const auto nf = family(cocp::FamilyKind::normal);
  CHECK(nf.max_density(kX) ==
        Catch::Approx(1.0 / (kScale * cocp::kSqrt2Pi)).margin(1e-12));
  const auto ef = family(cocp::FamilyKind::exponential);
  CHECK(ef.max_density(kX) == Catch::Approx(1.0 / kScale).margin(1e-12));
}

TEST_CASE("sampler matches closed-form moments and support") {
  const int n = 200000;
  struct Expect {
    cocp::FamilyKind kind;
    double mean, var;
  };
  const Expect table[] = {
      {cocp::FamilyKind::normal, 0.217482767056, 0.029756250000},
      {cocp::FamilyKind::exponential, 0.389982767056, 0.029756250000},
      {cocp::FamilyKind::lognormal, 0.303653595947, 0.018481719832},
  };
  for (const auto& e : table) {
    const auto f = family(e.kind);
    cocp::Rng rng(977);
    double s1 = 0.0, s2 = 0.0, lo = cocp::kInf;
    for (int i = 0; i < n; ++i) {
      const double y = f.sample(kX, rng);
      s1 += y;
      s2 += y * y;
      lo = std::min(lo, y);
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    CHECK(mean == Catch::Approx(e.mean).margin(0.005));
    CHECK(var == Catch::Approx(e.var).epsilon(0.05));
    CHECK(lo >= f.support_lower(kX) - 1e-12);
  }
}

TEST_CASE("highest-density intervals") {
  const double z95 = 1.644853626951;
  SECTION("normal is symmetric around the mean") {
    const auto h = cocp::oracle_hdi(family(cocp::FamilyKind::normal), kX, kAlpha);
    CHECK(h.lower == Catch::Approx(-0.066254483594).margin(1e-9));
    CHECK(h.upper == Catch::Approx(0.501220017705).margin(1e-9));
    CHECK(h.center == Catch::Approx(kTheta).margin(1e-10));
    CHECK(h.radius == Catch::Approx(z95 * kScale).margin(1e-9));
    CHECK_FALSE(h.boundary_pinned);
  }
  SECTION("exponential pins at the support boundary") {
    const auto h =
        cocp::oracle_hdi(family(cocp::FamilyKind::exponential), kX, kAlpha);
    CHECK(h.lower == Catch::Approx(kTheta).margin(1e-10));
    CHECK(h.upper == Catch::Approx(0.614678695597).margin(1e-9));
    CHECK(h.boundary_pinned);
  }
  SECTION("lognormal balances endpoint densities") {
    const auto f = family(cocp::FamilyKind::lognormal);
    const auto h = cocp::oracle_hdi(f, kX, kAlpha);
    CHECK(h.lower == Catch::Approx(0.135253119800).margin(1e-8));
    CHECK(h.upper == Catch::Approx(0.477094371554).margin(1e-8));
    CHECK(f.pdf(kX, h.lower) == Catch::Approx(f.pdf(kX, h.upper)).epsilon(1e-6));
    CHECK_FALSE(h.boundary_pinned);
    // strictly shorter than the equal-tailed interval at the same level
    const double et = f.quantile(kX, 0.95) - f.quantile(kX, 0.05);
    CHECK(h.upper - h.lower < et - 1e-3);
  }
  SECTION("exact mass across families and x") {
    for (auto k : {cocp::FamilyKind::normal, cocp::FamilyKind::exponential,
                   cocp::FamilyKind::lognormal}) {
      const auto f = family(k);
      for (double x : {-1.7, -0.4, 0.0, 0.8, 1.9}) {
        const auto h = cocp::oracle_hdi(f, x, kAlpha);
        CHECK(f.cdf(x, h.upper) - f.cdf(x, h.lower) ==
              Catch::Approx(1.0 - kAlpha).margin(1e-9));
      }
    }
  }
}

TEST_CASE("folded radius is the minimal 90% fold quantile") {
  struct Case {
    cocp::FamilyKind kind;
    double c, expect;
  };
  const Case table[] = {
      {cocp::FamilyKind::normal, kTheta + 0.1, 0.327697502590},
      {cocp::FamilyKind::exponential, kTheta + 0.1, 0.297195928541},
      {cocp::FamilyKind::lognormal, kTheta + 0.1, 0.173166293436},
      {cocp::FamilyKind::normal, kTheta, 0.283737250649},
  };
  for (const auto& t : table) {
    const auto f = family(t.kind);
    const double r = cocp::folded_radius(f, kX, t.c, kAlpha);
    CHECK(r == Catch::Approx(t.expect).margin(1e-8));
    const double mass = f.cdf(kX, t.c + r) - f.cdf(kX, t.c - r);
    CHECK(mass >= 1.0 - kAlpha - 1e-9);
    const double below =
        f.cdf(kX, t.c + r - 1e-6) - f.cdf(kX, t.c - r + 1e-6);
    CHECK(below < 1.0 - kAlpha);
  }
}

TEST_CASE("push-pull derivative matches the radius map") {
  struct Case {
    cocp::FamilyKind kind;
    double c, psi, deriv;
  };
  const Case table[] = {
      {cocp::FamilyKind::normal, kTheta + 0.1, 0.327697502590, 0.800955765721},
      {cocp::FamilyKind::lognormal, kTheta + 0.25, 0.293849559469,
       0.954823419264},
      {cocp::FamilyKind::exponential, kTheta + 0.6, 0.582027780931,
       0.997656649103},
  };
  for (const auto& t : table) {
    const auto f = family(t.kind);
    CHECK(cocp::folded_radius(f, kX, t.c, kAlpha) ==
          Catch::Approx(t.psi).margin(1e-8));
    const double d = cocp::push_pull_derivative(f, kX, t.c, kAlpha);
    CHECK(d == Catch::Approx(t.deriv).margin(1e-8));
    const double h = 1e-5;
    const double fd = (cocp::folded_radius(f, kX, t.c + h, kAlpha) -
                       cocp::folded_radius(f, kX, t.c - h, kAlpha)) /
                      (2.0 * h);
    CHECK(d == Catch::Approx(fd).margin(1e-5));
  }
  CHECK(cocp::push_pull_derivative(family(cocp::FamilyKind::normal), kX,
                                   kTheta, kAlpha) ==
        Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("smoothed pdf against independent quadrature") {
  const auto nf = family(cocp::FamilyKind::normal);
  CHECK(cocp::smoothed_pdf(nf, kX, kTheta + 0.15, 0.02) ==
        Catch::Approx(1.5756299324).margin(1e-6));
  const auto ef = family(cocp::FamilyKind::exponential);
  CHECK(cocp::smoothed_pdf(ef, kX, kTheta + 0.01, 0.02) ==
        Catch::Approx(3.0388038023).margin(1e-6));
  // tiny beta collapses to the raw density away from the support edge
  CHECK(cocp::smoothed_pdf(nf, kX, kTheta + 0.15, 1e-4) ==
        Catch::Approx(nf.pdf(kX, kTheta + 0.15)).margin(1e-3));
}

TEST_CASE("soft coverage gradient") {
  const auto ef = family(cocp::FamilyKind::exponential);
  const double g = cocp::soft_coverage_center_gradient(ef, kX, kTheta + 0.3,
                                                       0.25, 0.02);
  CHECK(g == Catch::Approx(-3.6915163183).margin(1e-5));
  // symmetric family at its center: zero gradient
  const auto nf = family(cocp::FamilyKind::normal);
  CHECK(cocp::soft_coverage_center_gradient(nf, kX, kTheta, 0.3, 0.02) ==
        Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("beta-smoothed oracle") {
  SECTION("normal stays centered") {
    const auto so =
        cocp::beta_soft_oracle(family(cocp::FamilyKind::normal), kX, kAlpha, 0.02);
    CHECK(so.center == Catch::Approx(kTheta).margin(1e-8));
    CHECK(so.radius == Catch::Approx(0.283737250649).margin(1e-7));
  }
  SECTION("exponential boundary offset at beta 1e-3") {
    const auto f = family(cocp::FamilyKind::exponential);
    const auto so = cocp::beta_soft_oracle(f, 0.0, kAlpha, 1e-3);
    CHECK(so.center == Catch::Approx(0.1715992027).margin(1e-6));
    CHECK(so.radius == Catch::Approx(0.1737885613).margin(1e-6));
    const double offset = (so.center - so.radius - f.support_lower(0.0)) / 1e-3;
    CHECK(offset == Catch::Approx(-2.189359).margin(5e-3));
  }
}
