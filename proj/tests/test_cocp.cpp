#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <string>

#include "cocp/cocp_trainer.hpp"

namespace {

// budgets small enough for unit tests but large enough to leave the
// warmup optimum
cocp::CocpConfig tiny_config(int alternations) {
  cocp::CocpConfig cfg;
  cfg.folds = 3;
  cfg.alternations = alternations;
  cfg.hidden = {16, 16};
  cfg.warmup.max_epochs = 120;
  cfg.warmup.patience = 20;
  cfg.phase.max_epochs = 40;
  cfg.phase.patience = 8;
  cfg.finetune.max_epochs = 120;
  cfg.finetune.patience = 20;
  return cfg;
}

double coverage(const cocp::Intervals& iv, const Eigen::VectorXd& y) {
  double c = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    c += (y[i] >= iv.lower[i] && y[i] <= iv.upper[i]) ? 1.0 : 0.0;
  }
  return c / double(y.size());
}

}  // namespace

TEST_CASE("config validation") {
  cocp::CocpConfig cfg;
  cfg.folds = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.beta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.alternations = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_NOTHROW(cocp::CocpConfig{}.validate());
  // default alternation phases run on a reduced budget
  CHECK(cocp::CocpConfig{}.phase.max_epochs == 200);
  CHECK(cocp::CocpConfig{}.phase.patience == 20);
}

TEST_CASE("fold training produces the expected phase sequence") {
  const auto d = cocp::generate_synthetic(cocp::FamilyKind::normal, 900, 31);
  const auto plan = cocp::make_split_plan(d.size(), 32, 3);
  const auto cfg = tiny_config(2);
  const auto fold = cocp::train_fold(d, plan.fold_plans[0], cfg, 33);

  std::vector<std::string> names;
  for (const auto& log : fold.logs) names.push_back(log.phase);
  CHECK(names == std::vector<std::string>{"warmup", "radius-1", "center-1",
                                          "radius-2", "center-2",
                                          "radius-final"});
  // radius head respects its floor everywhere
  const Eigen::MatrixXd probe =
      Eigen::VectorXd::LinSpaced(64, -2.0, 2.0).replicate(1, 1);
  const Eigen::MatrixXd r = cocp::forward(fold.radius, probe);
  CHECK((r.array() >= cocp::kRadiusFloor).all());

  const auto t0 = cocp::train_fold(d, plan.fold_plans[0], tiny_config(0), 33);
  std::vector<std::string> names0;
  for (const auto& log : t0.logs) names0.push_back(log.phase);
  CHECK(names0 == std::vector<std::string>{"warmup", "radius-final"});
}

TEST_CASE("fit covers held-out data and averages fold outputs") {
  const auto d = cocp::generate_synthetic(cocp::FamilyKind::normal, 1500, 41);
  const auto plan = cocp::make_split_plan(d.size(), 42, 3);
  const auto cfg = tiny_config(1);
  const auto fit = cocp::fit_cocp(d, plan, cfg, 43);
  CHECK(fit.model.method == "cocp");
  REQUIRE(fit.folds);
  CHECK(fit.folds->size() == 3);

  const Eigen::MatrixXd Xt = cocp::take_rows(d.X, plan.test_idx);
  const auto iv = cocp::predict_interval(fit.model, Xt);
  const double cov = coverage(iv, cocp::take(d.y, plan.test_idx));
  CHECK(cov > 0.84);
  CHECK(cov < 0.96);

  // the ensemble is the mean of the per-fold head outputs
  Eigen::VectorXd mean_center = Eigen::VectorXd::Zero(Xt.rows());
  Eigen::VectorXd mean_radius = Eigen::VectorXd::Zero(Xt.rows());
  for (const auto& fold : *fit.folds) {
    mean_center += cocp::forward(fold.center, Xt).col(0);
    mean_radius += cocp::forward(fold.radius, Xt).col(0);
  }
  mean_center /= 3.0;
  mean_radius /= 3.0;
  CHECK((fit.model.center_fn(Xt) - mean_center).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((fit.model.radius_fn(Xt) - mean_radius).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit is deterministic in the seed") {
  const auto d = cocp::generate_synthetic(cocp::FamilyKind::exponential, 900, 51);
  const auto plan = cocp::make_split_plan(d.size(), 52, 3);
  const auto cfg = tiny_config(1);
  const auto a = cocp::fit_cocp(d, plan, cfg, 53);
  const auto b = cocp::fit_cocp(d, plan, cfg, 53);
  CHECK(a.model.q_hat == b.model.q_hat);
  const Eigen::MatrixXd Xt = cocp::take_rows(d.X, plan.test_idx);
  CHECK(a.model.center_fn(Xt) == b.model.center_fn(Xt));
  CHECK(a.model.radius_fn(Xt) == b.model.radius_fn(Xt));

  const auto c = cocp::fit_cocp(d, plan, cfg, 54);
  CHECK(a.model.center_fn(Xt) != c.model.center_fn(Xt));
}

TEST_CASE("fold count must match the plan") {
  const auto d = cocp::generate_synthetic(cocp::FamilyKind::normal, 900, 61);
  const auto plan = cocp::make_split_plan(d.size(), 62, 3);
  auto cfg = tiny_config(0);
  cfg.folds = 4;
  CHECK_THROWS_AS(cocp::fit_cocp(d, plan, cfg, 63), std::invalid_argument);
}

TEST_CASE("center validation metric variant runs") {
  const auto d = cocp::generate_synthetic(cocp::FamilyKind::normal, 900, 71);
  const auto plan = cocp::make_split_plan(d.size(), 72, 3);
  auto cfg = tiny_config(1);
  cfg.center_val = cocp::CenterValMetric::mse;
  const auto fit = cocp::fit_cocp(d, plan, cfg, 73);
  const auto iv =
      cocp::predict_interval(fit.model, cocp::take_rows(d.X, plan.test_idx));
  const double cov = coverage(iv, cocp::take(d.y, plan.test_idx));
  CHECK(cov > 0.82);
}

TEST_CASE("serialized fits reload with identical predictions") {
  const auto d = cocp::generate_synthetic(cocp::FamilyKind::lognormal, 900, 81);
  const auto plan = cocp::make_split_plan(d.size(), 82, 3);
  const auto fit = cocp::fit_cocp(d, plan, tiny_config(1), 83);

  const std::string path = "/tmp/cocp_fit_roundtrip.json";
  cocp::save_cocp_fit(fit, path);
  const auto back = cocp::load_cocp_fit(path);
  std::remove(path.c_str());

  CHECK(back.model.q_hat == fit.model.q_hat);
  CHECK(back.model.method == "cocp");
  const Eigen::MatrixXd Xt = cocp::take_rows(d.X, plan.test_idx);
  CHECK(back.model.center_fn(Xt) == fit.model.center_fn(Xt));
  CHECK(back.model.radius_fn(Xt) == fit.model.radius_fn(Xt));
  const auto iv1 = cocp::predict_interval(fit.model, Xt);
  const auto iv2 = cocp::predict_interval(back.model, Xt);
  CHECK(iv1.lower == iv2.lower);
  CHECK(iv1.upper == iv2.upper);
}
