#pragma once

// Alternating center/radius training with K-fold cross-fitting. Per fold:
// MSE warmup of the center, T rounds of {radius update on the folded
// residuals with the center frozen, center update on the soft-coverage loss
// with the radius frozen}, then a final radius fit at the full epoch budget.
// Fold outputs are averaged post-head and calibrated once.

#include <Eigen/Dense>

#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cocp/conformal.hpp"
#include "cocp/datagen.hpp"
#include "cocp/losses.hpp"
#include "cocp/rng.hpp"
#include "cocp/tensor_nn.hpp"

namespace cocp {

// Alternation phases run on a reduced budget; warmup and the final radius
// fit keep the full one. The outer loop dominates cost, not any single
// phase, so the short budget keeps T=5 tractable without starving T=0.
inline TrainConfig alternation_budget() {
  TrainConfig c;
  c.max_epochs = 200;
  c.patience = 20;
  return c;
}

// Which metric early-stops the center phase: its own soft-coverage loss or
// plain MSE on the validation fold.
enum class CenterValMetric { soft_coverage, mse };

struct CocpConfig {
  double alpha = 0.1;
  int folds = 5;
  int alternations = 5;
  double beta = 0.01;
  std::vector<int> hidden{64, 64};
  TrainConfig warmup;
  TrainConfig phase = alternation_budget();
  TrainConfig finetune;
  CenterValMetric center_val = CenterValMetric::soft_coverage;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw std::invalid_argument("CocpConfig: alpha must be in (0,1)");
    }
    if (folds < 2) throw std::invalid_argument("CocpConfig: folds must be >= 2");
    if (alternations < 0) {
      throw std::invalid_argument("CocpConfig: alternations must be >= 0");
    }
    if (!(beta > 0.0)) throw std::invalid_argument("CocpConfig: beta must be positive");
    cocp::validate(warmup);
    cocp::validate(phase);
    cocp::validate(finetune);
  }
};

struct PhaseLog {
  std::string phase;
  TrainResult result;
};

struct FoldArtifacts {
  MlpModel center;
  MlpModel radius;
  std::vector<PhaseLog> logs;
};

inline FoldArtifacts train_fold(const Dataset& d, const FoldPlan& fp,
                                const CocpConfig& cfg,
                                std::uint64_t fold_seed) {
  cfg.validate();
  const Eigen::MatrixXd Xc = take_rows(d.X, fp.center_idx);
  const Eigen::VectorXd yc = take(d.y, fp.center_idx);
  const Eigen::MatrixXd Xr = take_rows(d.X, fp.radius_idx);
  const Eigen::VectorXd yr = take(d.y, fp.radius_idx);
  const Eigen::MatrixXd Xv = take_rows(d.X, fp.foldval_idx);
  const Eigen::VectorXd yv = take(d.y, fp.foldval_idx);

  std::vector<int> dims{int(d.X.cols())};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);

  FoldArtifacts art;
  art.center =
      make_mlp(dims, Head::identity, stream_seed(fold_seed, 0, "center-init"));
  art.radius =
      make_mlp(dims, Head::positive, stream_seed(fold_seed, 0, "radius-init"));

  const auto run_phase = [&](std::string name, MlpModel& m,
                             const Objective& obj, const Eigen::MatrixXd& X,
                             const Eigen::MatrixXd& T,
                             const Eigen::MatrixXd& Tval,
                             const TrainConfig& tc,
                             const Objective& val_obj = {}) {
    try {
      TrainResult res = train(m, obj, X, T, Xv, Tval, tc, val_obj);
      art.logs.push_back({std::move(name), std::move(res)});
    } catch (const TrainDivergence& e) {
      std::ostringstream os;
      os << "phase '" << name << "': " << e.what();
      throw TrainDivergence(os.str(), e.epoch, e.batch);
    }
  };

  // Targets ride as (y, frozen other-model prediction) columns; the frozen
  // column is recomputed once per phase, never inside it.
  const auto with_frozen = [](const Eigen::VectorXd& y,
                              const Eigen::VectorXd& frozen) {
    Eigen::MatrixXd t(y.size(), 2);
    t.col(0) = y;
    t.col(1) = frozen;
    return t;
  };

  TrainConfig tw = cfg.warmup;
  tw.rng_seed = stream_seed(fold_seed, 0, "warmup-batches");
  run_phase("warmup", art.center, make_mse_objective(), Xc, yc, yv, tw);

  const Objective radius_obj = make_folded_radius_objective(cfg.alpha);
  const Objective center_obj = make_soft_coverage_objective(cfg.beta);
  const Objective center_val_obj =
      cfg.center_val == CenterValMetric::mse ? make_mse_objective()
                                             : Objective{};

  for (int t = 1; t <= cfg.alternations; ++t) {
    TrainConfig tp = cfg.phase;
    tp.rng_seed = stream_seed(fold_seed, std::uint64_t(t), "radius-batches");
    run_phase("radius-" + std::to_string(t), art.radius, radius_obj, Xr,
              with_frozen(yr, forward(art.center, Xr).col(0)),
              with_frozen(yv, forward(art.center, Xv).col(0)), tp);

    tp.rng_seed = stream_seed(fold_seed, std::uint64_t(t), "center-batches");
    run_phase("center-" + std::to_string(t), art.center, center_obj, Xc,
              with_frozen(yc, forward(art.radius, Xc).col(0)),
              with_frozen(yv, forward(art.radius, Xv).col(0)), tp,
              center_val_obj);
  }

  TrainConfig tf = cfg.finetune;
  tf.rng_seed = stream_seed(fold_seed, 0, "finetune-batches");
  run_phase("radius-final", art.radius, radius_obj, Xr,
            with_frozen(yr, forward(art.center, Xr).col(0)),
            with_frozen(yv, forward(art.center, Xv).col(0)), tf);
  return art;
}

// Post-head output averaging; the radius floor survives the mean.
inline std::pair<PredictFn, PredictFn> ensemble(
    std::shared_ptr<const std::vector<FoldArtifacts>> arts) {
  if (!arts || arts->empty()) {
    throw std::invalid_argument("ensemble: no fold artifacts");
  }
  PredictFn center = [arts](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(X.rows());
    for (const auto& a : *arts) acc += forward(a.center, X).col(0);
    return acc / double(arts->size());
  };
  PredictFn radius = [arts](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(X.rows());
    for (const auto& a : *arts) acc += forward(a.radius, X).col(0);
    return acc / double(arts->size());
  };
  return {std::move(center), std::move(radius)};
}

struct CocpFit {
  std::shared_ptr<std::vector<FoldArtifacts>> folds;
  IntervalModel model;
};

inline CocpFit fit_cocp(const Dataset& d, const SplitPlan& plan,
                        const CocpConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (int(plan.fold_plans.size()) != cfg.folds) {
    std::ostringstream os;
    os << "fit_cocp: split plan has " << plan.fold_plans.size()
       << " folds, config expects " << cfg.folds;
    throw std::invalid_argument(os.str());
  }
  CocpFit fit;
  fit.folds = std::make_shared<std::vector<FoldArtifacts>>();
  for (int k = 0; k < cfg.folds; ++k) {
    fit.folds->push_back(train_fold(d, plan.fold_plans[std::size_t(k)], cfg,
                                    stream_seed(seed, std::uint64_t(k),
                                                "fold")));
  }
  auto [center_fn, radius_fn] = ensemble(fit.folds);
  fit.model = calibrate(std::move(center_fn), std::move(radius_fn),
                        take_rows(d.X, plan.cal_idx), take(d.y, plan.cal_idx),
                        cfg.alpha, "cocp");
  return fit;
}

// Checkpoint of the fold networks plus the calibration factor, enough to
// rebuild the interval model without retraining.
inline nlohmann::json cocp_fit_to_json(const CocpFit& fit) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& a : *fit.folds) {
    folds.push_back({{"center", mlp_to_json(a.center)},
                     {"radius", mlp_to_json(a.radius)}});
  }
  return {{"folds", std::move(folds)}, {"q_hat", fit.model.q_hat}};
}

inline CocpFit cocp_fit_from_json(const nlohmann::json& j) {
  CocpFit fit;
  fit.folds = std::make_shared<std::vector<FoldArtifacts>>();
  for (const auto& e : j.at("folds")) {
    FoldArtifacts a;
    a.center = mlp_from_json(e.at("center"));
    a.radius = mlp_from_json(e.at("radius"));
    fit.folds->push_back(std::move(a));
  }
  auto [center_fn, radius_fn] = ensemble(fit.folds);
  fit.model.method = "cocp";
  fit.model.center_fn = std::move(center_fn);
  fit.model.radius_fn = std::move(radius_fn);
  fit.model.q_hat = j.at("q_hat").get<double>();
  return fit;
}

inline void save_cocp_fit(const CocpFit& fit, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_cocp_fit: cannot open " + path);
  out << cocp_fit_to_json(fit).dump(2) << "\n";
}

inline CocpFit load_cocp_fit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_cocp_fit: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return cocp_fit_from_json(j);
}

}  // namespace cocp
