#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "cocp/numerics.hpp"
#include "cocp/rng.hpp"

namespace {

double fd_central(double (*f)(double), double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("sigmoid and softplus identities") {
  CHECK(cocp::sigmoid(0.0) == 0.5);
  for (double x : {-30.0, -3.0, -0.7, 0.0, 0.4, 2.0, 25.0}) {
    CHECK(cocp::sigmoid(x) + cocp::sigmoid(-x) == Catch::Approx(1.0).margin(1e-15));
    CHECK(cocp::sigmoid_deriv(x) ==
          Catch::Approx(cocp::sigmoid(x) * (1.0 - cocp::sigmoid(x))).margin(1e-15));
    CHECK(cocp::softplus_deriv(x) == Catch::Approx(cocp::sigmoid(x)).margin(1e-15));
    CHECK(cocp::softplus(x) - cocp::softplus(-x) == Catch::Approx(x).margin(1e-12));
  }
  // extreme arguments stay finite and saturate
  CHECK(cocp::softplus(1000.0) == 1000.0);
  CHECK(cocp::softplus(-1000.0) == 0.0);
  CHECK(cocp::sigmoid(1000.0) == 1.0);
  CHECK(cocp::sigmoid(-1000.0) == 0.0);
  // derivative matches finite differences at moderate arguments
  for (double x : {-2.0, -0.3, 0.9, 4.0}) {
    const double fd = fd_central(&cocp::softplus, x, 1e-6);
    CHECK(cocp::softplus_deriv(x) == Catch::Approx(fd).margin(1e-9));
  }
}

TEST_CASE("bisect_root finds bracketed roots") {
  const double root = cocp::bisect_root([](double x) { return std::cos(x); },
                                        1.0, 2.0, 1e-13, 200, "cos");
  CHECK(root == Catch::Approx(std::acos(-1.0) / 2.0).margin(1e-12));

  const double at_lo = cocp::bisect_root([](double x) { return x; }, 0.0, 1.0,
                                         1e-13, 200, "identity");
  CHECK(std::abs(at_lo) <= 1e-12);

  CHECK_THROWS_AS(cocp::bisect_root([](double x) { return x + 5.0; }, 0.0, 1.0,
                                    1e-13, 200, "shifted"),
                  cocp::NumericsError);
}

TEST_CASE("bisect_smallest_at_least on monotone functions") {
  const auto square = [](double r) { return r * r; };
  const double r1 = cocp::bisect_smallest_at_least(square, 9.0, 0.0, 10.0,
                                                   1e-11, 200, "square");
  CHECK(r1 == Catch::Approx(3.0).margin(1e-10));

  // jump function: the smallest admissible point is the jump location
  const auto step = [](double r) { return r < 1.5 ? 0.0 : 1.0; };
  const double r2 = cocp::bisect_smallest_at_least(step, 0.5, 0.0, 10.0, 1e-11,
                                                   200, "step");
  CHECK(r2 == Catch::Approx(1.5).margin(1e-9));
}

TEST_CASE("expand_until grows a bracket to reach the target") {
  const auto square = [](double r) { return r * r; };
  const double hi = cocp::expand_until(square, 9.0, 0.5, 1e6, "square");
  CHECK(square(hi) >= 9.0);
  CHECK_THROWS_AS(cocp::expand_until(square, 1e30, 0.5, 100.0, "square"),
                  cocp::NumericsError);
}

TEST_CASE("adaptive quadrature matches closed forms") {
  cocp::QuadratureOptions opts;
  CHECK(cocp::integrate([](double x) { return x * x; }, 0.0, 1.0, opts) ==
        Catch::Approx(1.0 / 3.0).margin(1e-10));
  CHECK(cocp::integrate([](double x) { return std::sin(x); }, 0.0,
                        std::acos(-1.0), opts) == Catch::Approx(2.0).margin(1e-9));
  const auto npdf = [](double x) {
    return std::exp(-0.5 * x * x) / 2.5066282746310002;
  };
  CHECK(cocp::integrate(npdf, -10.0, 10.0, opts) ==
        Catch::Approx(1.0).margin(1e-9));
  CHECK(cocp::integrate([](double x) { return std::exp(-x); }, 0.0, 40.0,
                        opts) == Catch::Approx(1.0).margin(1e-9));
  // reversed intervals are rejected rather than silently negated
  CHECK_THROWS_AS(cocp::integrate([](double x) { return x; }, 1.0, 0.0, opts),
                  cocp::NumericsError);
}

TEST_CASE("stream seeds are deterministic and well separated") {
  const auto s = cocp::stream_seed(42, 3, "radius-batches");
  CHECK(s == cocp::stream_seed(42, 3, "radius-batches"));

  std::set<std::uint64_t> seen;
  for (std::uint64_t base : {1ULL, 2ULL, 42ULL}) {
    for (int rep = 0; rep < 4; ++rep) {
      for (const char* role : {"data", "split", "ab", "ba"}) {
        seen.insert(cocp::stream_seed(base, rep, role));
      }
    }
  }
  CHECK(seen.size() == 3 * 4 * 4);  // role string order matters, no collisions
}
