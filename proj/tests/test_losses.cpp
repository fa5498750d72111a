#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "cocp/losses.hpp"
#include "cocp/rng.hpp"

namespace {

// Central finite differences of an objective's value against its reported
// gradient, coordinate by coordinate.
void check_gradient(const cocp::Objective& obj, Eigen::MatrixXd out,
                    const Eigen::MatrixXd& targets, double tol) {
  Eigen::MatrixXd grad;
  obj(out, targets, &grad);
  REQUIRE(grad.rows() == out.rows());
  REQUIRE(grad.cols() == out.cols());
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const double keep = out(i, j);
      out(i, j) = keep + h;
      const double up = obj(out, targets, nullptr);
      out(i, j) = keep - h;
      const double dn = obj(out, targets, nullptr);
      out(i, j) = keep;
      const double fd = (up - dn) / (2.0 * h);
      INFO("coordinate (" << i << "," << j << ")");
      CHECK(grad(i, j) == Catch::Approx(fd).margin(tol));
    }
  }
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c,
                              std::uint64_t seed) {
  cocp::Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  }
  return m;
}

}  // namespace

TEST_CASE("pinball values and derivative") {
  CHECK(cocp::pinball(2.0, 0.9) == Catch::Approx(1.8).margin(1e-15));
  CHECK(cocp::pinball(-1.0, 0.9) == Catch::Approx(0.1).margin(1e-15));
  CHECK(cocp::pinball(0.0, 0.9) == 0.0);
  CHECK(cocp::pinball_deriv(2.0, 0.9) == Catch::Approx(0.9));
  CHECK(cocp::pinball_deriv(-1.0, 0.9) == Catch::Approx(-0.1));
  CHECK(cocp::pinball_deriv(0.0, 0.9) == Catch::Approx(-0.1));  // left limit
}

TEST_CASE("mse objective value and gradient") {
  const Eigen::MatrixXd out = random_matrix(7, 1, 11);
  const Eigen::MatrixXd targets = random_matrix(7, 2, 12);
  const auto obj = cocp::make_mse_objective();
  const double v = obj(out, targets, nullptr);
  CHECK(v == Catch::Approx((out.col(0) - targets.col(0)).squaredNorm() / 7.0)
                 .margin(1e-14));
  check_gradient(obj, out, targets, 1e-8);
}

TEST_CASE("pinball objective gradient") {
  // offsets keep every residual away from the kink so FD is clean
  Eigen::MatrixXd out = random_matrix(9, 1, 21);
  Eigen::MatrixXd targets = random_matrix(9, 1, 22);
  targets.col(0).array() += 3.0;
  check_gradient(cocp::make_pinball_objective(0.85), out, targets, 1e-8);
}

TEST_CASE("folded radius loss matches its definition") {
  const Eigen::VectorXd y = random_matrix(6, 1, 31).col(0);
  const Eigen::VectorXd c = random_matrix(6, 1, 32).col(0);
  Eigen::VectorXd r = random_matrix(6, 1, 33).col(0);
  r.array() += 1.5;
  const double alpha = 0.1;
  double direct = 0.0;
  for (Eigen::Index i = 0; i < 6; ++i) {
    direct += cocp::pinball(std::abs(y[i] - c[i]) - r[i], 1.0 - alpha);
  }
  direct /= 6.0;
  CHECK(cocp::folded_radius_loss(y, c, r, alpha) ==
        Catch::Approx(direct).margin(1e-14));

  Eigen::MatrixXd targets(6, 2);
  targets.col(0) = y;
  targets.col(1) = c;
  check_gradient(cocp::make_folded_radius_objective(alpha), r, targets, 1e-8);
}

TEST_CASE("soft coverage loss value and gradient") {
  const double beta = 0.05;
  const Eigen::VectorXd y = random_matrix(8, 1, 41).col(0);
  const Eigen::VectorXd c = random_matrix(8, 1, 42).col(0);
  Eigen::VectorXd r = random_matrix(8, 1, 43).col(0);
  r.array() += 1.2;
  double direct = 0.0;
  for (Eigen::Index i = 0; i < 8; ++i) {
    direct += -cocp::sigmoid((r[i] - std::abs(y[i] - c[i])) / beta);
  }
  direct /= 8.0;
  CHECK(cocp::soft_coverage_loss(y, c, r, beta) ==
        Catch::Approx(direct).margin(1e-14));

  Eigen::MatrixXd targets(8, 2);
  targets.col(0) = y;
  targets.col(1) = r;
  check_gradient(cocp::make_soft_coverage_objective(beta), c, targets, 1e-7);
}

TEST_CASE("quantile pair objective value and gradient") {
  Eigen::MatrixXd out = random_matrix(10, 2, 51);
  out.col(1).array() += 2.5;  // keep hi above y, lo below
  Eigen::MatrixXd targets = random_matrix(10, 1, 52);
  const auto obj = cocp::make_quantile_pair_objective(0.05, 0.95);
  double direct = 0.0;
  for (Eigen::Index i = 0; i < 10; ++i) {
    direct += cocp::pinball(targets(i, 0) - out(i, 0), 0.05) +
              cocp::pinball(targets(i, 0) - out(i, 1), 0.95);
  }
  direct /= 10.0;
  CHECK(obj(out, targets, nullptr) == Catch::Approx(direct).margin(1e-14));
  check_gradient(obj, out, targets, 1e-8);

  CHECK_THROWS_AS(cocp::make_quantile_pair_objective(0.9, 0.1),
                  std::invalid_argument);
}

TEST_CASE("objective factory dispatches on kind") {
  const Eigen::MatrixXd out = random_matrix(5, 1, 61);
  const Eigen::MatrixXd targets = random_matrix(5, 2, 62);
  cocp::LossSpec spec;
  spec.kind = cocp::LossSpec::Kind::soft_coverage;
  spec.param = 0.02;
  const double a = cocp::make_objective(spec)(out, targets, nullptr);
  const double b =
      cocp::make_soft_coverage_objective(0.02)(out, targets, nullptr);
  CHECK(a == b);
}

TEST_CASE("objectives reject shape mismatches") {
  const Eigen::MatrixXd out = random_matrix(4, 2, 71);
  const Eigen::MatrixXd targets = random_matrix(4, 1, 72);
  CHECK_THROWS_AS(cocp::make_mse_objective()(out, targets, nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      cocp::make_folded_radius_objective(0.1)(targets, targets, nullptr),
      std::invalid_argument);
}
