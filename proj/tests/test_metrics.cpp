#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "cocp/metrics.hpp"

namespace {

cocp::Intervals constant_intervals(Eigen::Index n, double lo, double hi) {
  cocp::Intervals iv;
  iv.lower = Eigen::VectorXd::Constant(n, lo);
  iv.upper = Eigen::VectorXd::Constant(n, hi);
  iv.any_infinite = !(std::isfinite(lo) && std::isfinite(hi));
  return iv;
}

}  // namespace

TEST_CASE("coverage and length, including infinite intervals") {
  cocp::Intervals iv;
  iv.lower.resize(4);
  iv.upper.resize(4);
  iv.lower << 0, 0, 0, -cocp::kInf;
  iv.upper << 1, 1, 1, cocp::kInf;
  iv.any_infinite = true;
  Eigen::VectorXd y(4);
  y << 0.5, 2.0, 1.0, 123.0;  // upper endpoint counts as covered
  const auto [cov, len] = cocp::coverage_and_length(iv, y);
  CHECK(cov == 0.75);
  CHECK(std::isinf(len));

  const auto z = cocp::coverage_indicator(iv, y);
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 0.0);
  CHECK(z[2] == 1.0);
  CHECK(z[3] == 1.0);
}

TEST_CASE("conmae vanishes on oracle intervals and rejects csv data") {
  const auto d = cocp::generate_synthetic(cocp::FamilyKind::lognormal, 60, 7);
  const auto& fam = d.synthetic_info().family;
  cocp::Intervals iv;
  iv.lower.resize(d.size());
  iv.upper.resize(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const auto h = cocp::oracle_hdi(fam, d.X(i, 0), 0.1);
    iv.lower[i] = h.lower;
    iv.upper[i] = h.upper;
  }
  cocp::IndexList all(std::size_t(d.size()));
  std::iota(all.begin(), all.end(), Eigen::Index(0));
  CHECK(cocp::conmae(d, all, iv, 0.1) <= 1e-8);
  CHECK(cocp::conmae(fam, d.X.col(0), iv, 0.1) <= 1e-8);

  // widening every interval moves the conditional mass above 1 - alpha
  cocp::Intervals wide = iv;
  wide.lower.array() -= 0.3;
  wide.upper.array() += 0.3;
  CHECK(cocp::conmae(d, all, wide, 0.1) > 0.01);

  cocp::Dataset csv = d;
  csv.provenance = cocp::CsvProvenance{"x.csv"};
  CHECK_THROWS_AS(cocp::conmae(csv, all, iv, 0.1), cocp::UnsupportedOperation);
}

TEST_CASE("kmeans recovers separated clusters") {
  Eigen::MatrixXd X(9, 1);
  X << 0.0, 0.1, -0.1, 10.0, 10.1, 9.9, -10.0, -10.1, -9.9;
  cocp::Rng rng(5);
  const auto km = cocp::kmeans(X, 3, rng, 10, 100);
  REQUIRE(km.centroids.rows() == 3);
  CHECK(km.inertia == Catch::Approx(0.06).margin(1e-9));
  // members of each block share a label
  CHECK(km.assignment[0] == km.assignment[1]);
  CHECK(km.assignment[0] == km.assignment[2]);
  CHECK(km.assignment[3] == km.assignment[4]);
  CHECK(km.assignment[6] == km.assignment[7]);
  CHECK(km.assignment[0] != km.assignment[3]);
  CHECK(km.assignment[0] != km.assignment[6]);

  cocp::Rng r1(9), r2(9);
  const auto a = cocp::kmeans(X, 3, r1, 5, 50);
  const auto b = cocp::kmeans(X, 3, r2, 5, 50);
  CHECK(a.assignment == b.assignment);
}

TEST_CASE("kmeans survives duplicate-heavy data") {
  // only two distinct locations for three clusters: one cluster must be
  // repaired or reseeded every iteration
  Eigen::MatrixXd X(6, 1);
  X << 1.0, 1.0, 1.0, 2.0, 2.0, 2.0;
  cocp::Rng rng(11);
  const auto km = cocp::kmeans(X, 3, rng, 8, 50);
  CHECK(km.inertia >= 0.0);
  CHECK(std::isfinite(km.inertia));
  for (int a : km.assignment) {
    CHECK(a >= 0);
    CHECK(a < 3);
  }
}

TEST_CASE("msce on a planted two-cluster instance") {
  // two tight clusters, coverage 0.8 and 1.0 at alpha = 0.1:
  // msce = 0.5*(0.8-0.9)^2 + 0.5*(1.0-0.9)^2 = 0.01
  const int half = 50;
  Eigen::MatrixXd X(2 * half, 1);
  Eigen::VectorXd y(2 * half);
  for (int i = 0; i < half; ++i) {
    X(i, 0) = 0.0;
    y[i] = (i < 40) ? 0.5 : 5.0;  // 40 of 50 covered by [0,1]
    X(half + i, 0) = 10.0;
    y[half + i] = 0.5;  // all covered
  }
  const auto iv = constant_intervals(2 * half, 0.0, 1.0);
  const auto res = cocp::msce(iv, X, y, 0.1, 2, 77);
  CHECK(res.value == Catch::Approx(0.01).margin(1e-12));
  REQUIRE(res.cluster_coverage.size() == 2);
  const double lo = res.cluster_coverage.minCoeff();
  const double hi = res.cluster_coverage.maxCoeff();
  CHECK(lo == Catch::Approx(0.8).margin(1e-12));
  CHECK(hi == Catch::Approx(1.0).margin(1e-12));

  CHECK_THROWS_AS(cocp::msce(iv, X, y, 0.1, 0, 77), std::invalid_argument);
}

TEST_CASE("wsc finds a planted low-coverage slab") {
  const Eigen::Index n = 2000;
  cocp::Rng rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = u(rng);
    X(i, 1) = u(rng);
    const bool in_slab = X(i, 0) >= 0.4 && X(i, 0) <= 0.6;
    const double p_cover = in_slab ? 0.5 : 0.95;
    y[i] = (u(rng) < p_cover) ? 0.5 : 5.0;
  }
  const auto iv = constant_intervals(n, 0.0, 1.0);
  const double w = cocp::wsc(iv, X, y, 0.1, 0.1, 1000, 31);
  CHECK(w <= 0.6);
  CHECK(w >= 0.2);  // eval-split noise cannot take it much below 0.5

  // fully covered data: every slab has coverage one
  const Eigen::VectorXd y1 = Eigen::VectorXd::Constant(n, 0.5);
  CHECK(cocp::wsc(iv, X, y1, 0.1, 0.1, 50, 31) == 1.0);
  // delta = 1 admits only the full slab, the eval marginal
  const double full = cocp::wsc(iv, X, y, 0.1, 1.0, 50, 31);
  const double marginal = cocp::coverage_indicator(iv, y).mean();
  CHECK(full == Catch::Approx(marginal).margin(0.03));
  CHECK(w <= full + 1e-12);

  CHECK_THROWS_AS(cocp::wsc(iv, X, y, 0.1, 1.5, 10, 31),
                  std::invalid_argument);
  CHECK_THROWS_AS(cocp::wsc(iv, X, y, 0.1, 0.0, 10, 31),
                  std::invalid_argument);
}

TEST_CASE("logistic loss gradient matches finite differences") {
  cocp::Rng rng(41);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd X(20, 3);
  Eigen::VectorXd z(20), w(3);
  for (Eigen::Index i = 0; i < 20; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = g(rng);
    z[i] = (g(rng) > 0) ? 1.0 : 0.0;
  }
  for (int j = 0; j < 3; ++j) w[j] = 0.3 * g(rng);
  double b = 0.2;

  Eigen::VectorXd gw;
  double gb = 0.0;
  cocp::logistic_loss(X, z, w, b, &gw, &gb);
  const double h = 1e-6;
  double max_rel = 0.0;
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXd wp = w, wm = w;
    wp[j] += h;
    wm[j] -= h;
    const double fd = (cocp::logistic_loss(X, z, wp, b) -
                       cocp::logistic_loss(X, z, wm, b)) /
                      (2.0 * h);
    max_rel = std::max(max_rel, std::abs(gw[j] - fd) / std::max(1e-4, std::abs(fd)));
  }
  const double fdb =
      (cocp::logistic_loss(X, z, w, b + h) - cocp::logistic_loss(X, z, w, b - h)) /
      (2.0 * h);
  max_rel = std::max(max_rel, std::abs(gb - fdb) / std::max(1e-4, std::abs(fdb)));
  CHECK(max_rel <= 1e-4);
}

TEST_CASE("logistic fit converges on well-posed labels") {
  cocp::Rng rng(51);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd X(400, 1);
  Eigen::VectorXd z(400);
  for (Eigen::Index i = 0; i < 400; ++i) {
    X(i, 0) = g(rng);
    z[i] = (u(rng) < cocp::sigmoid(1.5 * X(i, 0) - 0.3)) ? 1.0 : 0.0;
  }
  // 500 full-batch steps leave the gradient just above the reporting
  // threshold here; a larger budget pushes it well below
  const auto fit = cocp::fit_logistic(X, z, 5000, 0.1);
  CHECK(fit.grad_norm <= 1e-3);
  CHECK(fit.w[0] > 0.8);
  CHECK(fit.w[0] < 2.5);
  const auto coarse = cocp::fit_logistic(X, z, 500, 0.1);
  CHECK(coarse.grad_norm <= 1e-2);
}

TEST_CASE("ert risk gap from fixed predictions") {
  Eigen::VectorXd z(2), h(2);
  z << 1.0, 0.0;
  h << 0.8, 0.2;
  CHECK(cocp::ert_from_predictions(z, h, 0.1, cocp::ErtLoss::l1) ==
        Catch::Approx(0.3).margin(1e-12));
  CHECK(cocp::ert_from_predictions(z, h, 0.1, cocp::ErtLoss::l2) ==
        Catch::Approx(0.37).margin(1e-12));
  // an auditor stuck at the target coverage has nothing to find
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(2, 0.9);
  CHECK(cocp::ert_from_predictions(z, flat, 0.1, cocp::ErtLoss::l2) == 0.0);
}

TEST_CASE("ert detects planted covariate-dependent coverage") {
  const Eigen::Index n = 1500;
  cocp::Rng rng(61);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd X(n, 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 2.0 * u(rng) - 1.0;
    const double p_cover = X(i, 0) > 0.0 ? 0.7 : 1.0;
    y[i] = (u(rng) < p_cover) ? 0.5 : 5.0;
  }
  const auto iv = constant_intervals(n, 0.0, 1.0);
  const auto r2 = cocp::ert(iv, X, y, 0.1, cocp::ErtLoss::l2, 5, 71);
  CHECK(r2.value > 0.005);
  // the l1 gap is also computable here; unlike l2 it can legitimately be
  // negative for a probability forecaster, so only finiteness is checked
  const auto r1 = cocp::ert(iv, X, y, 0.1, cocp::ErtLoss::l1, 5, 71);
  CHECK(std::isfinite(r1.value));

  // homogeneous coverage: nothing to transfer, the gap stays near zero
  Eigen::VectorXd yh(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    yh[i] = (u(rng) < 0.9) ? 0.5 : 5.0;
  }
  const auto rh = cocp::ert(iv, X, yh, 0.1, cocp::ErtLoss::l2, 5, 71, 3000);
  CHECK(std::abs(rh.value) < 0.004);
  CHECK(rh.converged);

  CHECK_THROWS_AS(cocp::ert(iv, X, y, 0.1, cocp::ErtLoss::l2, 1, 71),
                  std::invalid_argument);
  const auto ivs = constant_intervals(30, 0.0, 1.0);
  CHECK_THROWS_AS(cocp::ert(ivs, X.topRows(30), y.head(30), 0.1,
                            cocp::ErtLoss::l2, 5, 71),
                  std::invalid_argument);
}

TEST_CASE("evaluate_all assembles the full report") {
  const auto d = cocp::generate_synthetic(cocp::FamilyKind::normal, 400, 81);
  const auto& fam = d.synthetic_info().family;
  cocp::Intervals iv;
  iv.lower.resize(d.size());
  iv.upper.resize(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const auto h = cocp::oracle_hdi(fam, d.X(i, 0), 0.1);
    iv.lower[i] = h.lower;
    iv.upper[i] = h.upper;
  }
  cocp::MetricsConfig cfg;
  cfg.wsc_directions = 50;
  const auto syn = d.synthetic_info();
  const auto rep = cocp::evaluate_all(iv, d.X, d.y, 0.1, &syn, cfg, 91);
  REQUIRE(rep.conmae.has_value());
  CHECK(*rep.conmae <= 1e-8);
  CHECK(rep.coverage > 0.85);
  CHECK(rep.coverage < 0.95);
  CHECK(rep.length_finite);
  CHECK(rep.mean_length > 0.0);
  CHECK(rep.msce < 0.02);
  CHECK(rep.wsc <= rep.coverage + 0.05);
  CHECK(std::abs(rep.ert_l2) < 0.01);

  const auto rep_csv = cocp::evaluate_all(iv, d.X, d.y, 0.1, nullptr, cfg, 91);
  CHECK_FALSE(rep_csv.conmae.has_value());

  // identical seeds reproduce every randomized metric
  const auto rep2 = cocp::evaluate_all(iv, d.X, d.y, 0.1, &syn, cfg, 91);
  CHECK(rep2.msce == rep.msce);
  CHECK(rep2.wsc == rep.wsc);
  CHECK(rep2.ert_l1 == rep.ert_l1);
  CHECK(rep2.ert_l2 == rep.ert_l2);
}
