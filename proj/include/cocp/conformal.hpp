#pragma once

// Split-conformal calibration with the normalized score, interval
// construction, and the Split / CQR baselines. Two interval forms share one
// model type: symmetric (center, radius, multiplicative q_hat >= 0) and
// two-sided (lower, upper, additive q_hat of either sign).

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cocp/datagen.hpp"
#include "cocp/losses.hpp"
#include "cocp/rng.hpp"
#include "cocp/tensor_nn.hpp"

namespace cocp {

using PredictFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

struct IntervalModel {
  std::string method;
  bool two_sided = false;
  // Symmetric form: interval = center -+ q_hat * radius.
  PredictFn center_fn;
  PredictFn radius_fn;
  // Two-sided form: interval = [lower - q_hat, upper + q_hat].
  PredictFn lower_fn;
  PredictFn upper_fn;
  double q_hat = 1.0;

  bool infinite() const { return std::isinf(q_hat); }
};

struct Intervals {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  bool any_infinite = false;
};

// k-th smallest score with k = ceil((n+1)(1-alpha)); +inf when k exceeds n.
// The 1e-9 shift guards against products like 10*0.9 landing one ulp above
// the integer they represent.
inline double conformal_quantile(const Eigen::VectorXd& scores, double alpha) {
  if (scores.size() == 0) {
    throw std::invalid_argument("conformal_quantile: empty scores");
  }
  if (!scores.allFinite()) {
    throw std::invalid_argument("conformal_quantile: non-finite score");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("conformal_quantile: alpha must be in (0,1)");
  }
  const Eigen::Index n = scores.size();
  const double v = double(n + 1) * (1.0 - alpha);
  Eigen::Index k = static_cast<Eigen::Index>(std::ceil(v - 1e-9));
  if (k < 1) k = 1;
  if (k > n) return kInf;
  std::vector<double> s(scores.data(), scores.data() + n);
  std::nth_element(s.begin(), s.begin() + (k - 1), s.end());
  return s[std::size_t(k - 1)];
}

inline IntervalModel calibrate(PredictFn center_fn, PredictFn radius_fn,
                               const Eigen::MatrixXd& X_cal,
                               const Eigen::VectorXd& y_cal, double alpha,
                               std::string method) {
  if (X_cal.rows() != y_cal.size() || y_cal.size() == 0) {
    throw std::invalid_argument("calibrate: bad calibration set");
  }
  const Eigen::VectorXd c = center_fn(X_cal);
  const Eigen::VectorXd r = radius_fn(X_cal);
  if (c.size() != y_cal.size() || r.size() != y_cal.size()) {
    throw std::invalid_argument("calibrate: predictor output size mismatch");
  }
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (!(r[i] >= kRadiusFloor * (1.0 - 1e-12))) {
      std::ostringstream os;
      os << "calibrate: radius " << r[i] << " below floor " << kRadiusFloor
         << " at calibration row " << i;
      throw std::invalid_argument(os.str());
    }
  }
  const Eigen::VectorXd scores =
      ((y_cal - c).cwiseAbs().array() / r.array()).matrix();
  IntervalModel m;
  m.method = std::move(method);
  m.center_fn = std::move(center_fn);
  m.radius_fn = std::move(radius_fn);
  m.q_hat = conformal_quantile(scores, alpha);
  return m;
}

inline IntervalModel calibrate_two_sided(PredictFn lower_fn, PredictFn upper_fn,
                                         const Eigen::MatrixXd& X_cal,
                                         const Eigen::VectorXd& y_cal,
                                         double alpha, std::string method) {
  if (X_cal.rows() != y_cal.size() || y_cal.size() == 0) {
    throw std::invalid_argument("calibrate: bad calibration set");
  }
  const Eigen::VectorXd lo = lower_fn(X_cal);
  const Eigen::VectorXd hi = upper_fn(X_cal);
  if (lo.size() != y_cal.size() || hi.size() != y_cal.size()) {
    throw std::invalid_argument("calibrate: predictor output size mismatch");
  }
  const Eigen::VectorXd scores =
      (lo - y_cal).cwiseMax(y_cal - hi);
  IntervalModel m;
  m.method = std::move(method);
  m.two_sided = true;
  m.lower_fn = std::move(lower_fn);
  m.upper_fn = std::move(upper_fn);
  m.q_hat = conformal_quantile(scores, alpha);
  return m;
}

inline Intervals predict_interval(const IntervalModel& m,
                                  const Eigen::MatrixXd& X) {
  Intervals out;
  out.any_infinite = m.infinite();
  if (m.two_sided) {
    out.lower = m.lower_fn(X).array() - m.q_hat;
    out.upper = m.upper_fn(X).array() + m.q_hat;
    // A large negative additive correction can cross the endpoints; collapse
    // to the midpoint so lower <= upper always holds.
    for (Eigen::Index i = 0; i < out.lower.size(); ++i) {
      if (out.lower[i] > out.upper[i]) {
        const double mid = 0.5 * (out.lower[i] + out.upper[i]);
        out.lower[i] = mid;
        out.upper[i] = mid;
      }
    }
  } else {
    const Eigen::VectorXd c = m.center_fn(X);
    const Eigen::VectorXd r = m.radius_fn(X);
    out.lower = c.array() - m.q_hat * r.array();
    out.upper = c.array() + m.q_hat * r.array();
  }
  return out;
}

struct BaselineConfig {
  std::vector<int> hidden{64, 64};
  TrainConfig train;
};

namespace detail {

inline PredictFn mlp_column_fn(std::shared_ptr<const MlpModel> model,
                               Eigen::Index col) {
  return [model, col](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return forward(*model, X).col(col);
  };
}

}  // namespace detail

// MSE-trained mean regressor with constant unit radius; the calibrated
// interval is mean -+ q_hat.
inline IntervalModel fit_split_baseline(const Dataset& d, const SplitPlan& plan,
                                        double alpha,
                                        const BaselineConfig& cfg,
                                        std::uint64_t seed,
                                        TrainResult* log = nullptr) {
  std::vector<int> dims{int(d.X.cols())};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);
  auto model = std::make_shared<MlpModel>(
      make_mlp(dims, Head::identity, stream_seed(seed, 0, "init")));
  TrainConfig tc = cfg.train;
  tc.rng_seed = stream_seed(seed, 0, "batches");
  const TrainResult res =
      train(*model, make_mse_objective(), take_rows(d.X, plan.train_idx),
            take(d.y, plan.train_idx), take_rows(d.X, plan.val_idx),
            take(d.y, plan.val_idx), tc);
  if (log) *log = res;
  auto ones = [](const Eigen::MatrixXd& X) -> Eigen::VectorXd {
    return Eigen::VectorXd::Ones(X.rows());
  };
  return calibrate(detail::mlp_column_fn(model, 0), ones,
                   take_rows(d.X, plan.cal_idx), take(d.y, plan.cal_idx),
                   alpha, "split");
}

// Quantile pair net at levels alpha/2 and 1-alpha/2 with the base-and-gap
// head (upper = lower + softplus gap, so the pair never crosses),
// conformalized with the two-sided score.
inline IntervalModel fit_cqr_baseline(const Dataset& d, const SplitPlan& plan,
                                      double alpha, const BaselineConfig& cfg,
                                      std::uint64_t seed,
                                      TrainResult* log = nullptr) {
  std::vector<int> dims{int(d.X.cols())};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(2);
  auto model = std::make_shared<MlpModel>(
      make_mlp(dims, Head::base_and_gap, stream_seed(seed, 0, "init")));
  TrainConfig tc = cfg.train;
  tc.rng_seed = stream_seed(seed, 0, "batches");
  const Eigen::MatrixXd yt = take(d.y, plan.train_idx);
  const Eigen::MatrixXd yv = take(d.y, plan.val_idx);
  const TrainResult res =
      train(*model, make_quantile_pair_objective(alpha / 2.0, 1.0 - alpha / 2.0),
            take_rows(d.X, plan.train_idx), yt, take_rows(d.X, plan.val_idx),
            yv, tc);
  if (log) *log = res;
  return calibrate_two_sided(detail::mlp_column_fn(model, 0),
                             detail::mlp_column_fn(model, 1),
                             take_rows(d.X, plan.cal_idx),
                             take(d.y, plan.cal_idx), alpha, "cqr");
}

}  // namespace cocp
