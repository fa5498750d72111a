#pragma once

// Evaluation measures: empirical coverage and length, exact conditional
// coverage error against the synthetic law, cluster-wise squared coverage
// error (K-means), worst-slice coverage over random directions, and the
// excess risk of a cross-fitted logistic auditor predicting the coverage
// indicator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cocp/cond_dist.hpp"
#include "cocp/conformal.hpp"
#include "cocp/datagen.hpp"
#include "cocp/numerics.hpp"
#include "cocp/rng.hpp"

namespace cocp {

struct UnsupportedOperation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MetricsConfig {
  int msce_clusters = 10;
  double wsc_delta = 0.1;
  int wsc_directions = 1000;
  double wsc_fit_fraction = 0.25;
  int ert_folds = 5;
  int ert_iters = 500;
  double ert_lr = 0.1;
};

struct MetricsReport {
  double coverage = 0.0;
  double mean_length = 0.0;
  bool length_finite = true;
  std::optional<double> conmae;
  double msce = 0.0;
  double wsc = 0.0;
  double ert_l1 = 0.0;
  double ert_l2 = 0.0;
  Eigen::VectorXd cluster_coverage;
  bool ert_converged = true;
  MetricsConfig config;
};

inline Eigen::VectorXd coverage_indicator(const Intervals& iv,
                                          const Eigen::VectorXd& y) {
  if (iv.lower.size() != y.size() || iv.upper.size() != y.size()) {
    throw std::invalid_argument("coverage_indicator: size mismatch");
  }
  Eigen::VectorXd z(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    z[i] = (y[i] >= iv.lower[i] && y[i] <= iv.upper[i]) ? 1.0 : 0.0;
  }
  return z;
}

// Infinite endpoints count as covered and push the mean length to +inf.
inline std::pair<double, double> coverage_and_length(
    const Intervals& iv, const Eigen::VectorXd& y) {
  const Eigen::VectorXd z = coverage_indicator(iv, y);
  const double length = (iv.upper - iv.lower).mean();
  return {z.mean(), length};
}

// Mean absolute gap between the exact conditional mass of each interval and
// the nominal level. Needs the true conditional law, so synthetic data only.
inline double conmae(const ConditionalFamily& fam,
                     const Eigen::VectorXd& x_test, const Intervals& iv,
                     double alpha) {
  if (x_test.size() != iv.lower.size()) {
    throw std::invalid_argument("conmae: size mismatch");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x_test.size(); ++i) {
    const double mass =
        fam.cdf(x_test[i], iv.upper[i]) - fam.cdf(x_test[i], iv.lower[i]);
    acc += std::abs(mass - (1.0 - alpha));
  }
  return acc / double(x_test.size());
}

inline double conmae(const Dataset& d, const IndexList& test_idx,
                     const Intervals& iv, double alpha) {
  if (!d.synthetic()) {
    throw UnsupportedOperation(
        "conmae: exact conditional coverage needs the synthetic law; "
        "unavailable for CSV data");
  }
  const Eigen::VectorXd x = take(Eigen::VectorXd(d.X.col(0)), test_idx);
  return conmae(d.synthetic_info().family, x, iv, alpha);
}

struct KmeansResult {
  Eigen::MatrixXd centroids;
  std::vector<int> assignment;
  double inertia = kInf;
};

namespace detail {

inline KmeansResult kmeans_once(const Eigen::MatrixXd& X, int K, Rng& rng,
                                int max_iters) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd C(K, X.cols());
  std::uniform_int_distribution<Eigen::Index> uidx(0, n - 1);
  C.row(0) = X.row(uidx(rng));
  Eigen::VectorXd d2 =
      (X.rowwise() - C.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = uidx(rng);
    }
    C.row(k) = X.row(pick);
    d2 = d2.cwiseMin((X.rowwise() - C.row(k)).rowwise().squaredNorm());
  }

  KmeansResult res;
  res.assignment.assign(std::size_t(n), -1);
  Eigen::VectorXd near(n);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = (X.row(i) - C.row(0)).squaredNorm();
      for (int k = 1; k < K; ++k) {
        const double dk = (X.row(i) - C.row(k)).squaredNorm();
        if (dk < bd) {
          bd = dk;
          best = k;
        }
      }
      near[i] = bd;
      if (res.assignment[std::size_t(i)] != best) {
        res.assignment[std::size_t(i)] = best;
        changed = true;
      }
    }
    std::vector<Eigen::Index> counts(std::size_t(K), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      ++counts[std::size_t(res.assignment[std::size_t(i)])];
    }
    // Empty clusters steal the point currently farthest from its centroid,
    // from a donor that keeps at least one member; if no donor exists the
    // centroid is reseeded at a random point.
    for (int k = 0; k < K; ++k) {
      if (counts[std::size_t(k)] > 0) continue;
      Eigen::Index far = -1;
      double fd = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[std::size_t(res.assignment[std::size_t(i)])] > 1 &&
            near[i] > fd) {
          fd = near[i];
          far = i;
        }
      }
      if (far < 0) {
        C.row(k) = X.row(uidx(rng));
        continue;
      }
      --counts[std::size_t(res.assignment[std::size_t(far)])];
      res.assignment[std::size_t(far)] = k;
      counts[std::size_t(k)] = 1;
      near[far] = 0.0;
      changed = true;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, X.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.assignment[std::size_t(i)]) += X.row(i);
    }
    for (int k = 0; k < K; ++k) {
      if (counts[std::size_t(k)] > 0) {
        C.row(k) = sums.row(k) / double(counts[std::size_t(k)]);
      }
    }
    if (!changed) break;
  }
  res.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    res.inertia += (X.row(i) - C.row(res.assignment[std::size_t(i)])).squaredNorm();
  }
  res.centroids = std::move(C);
  return res;
}

inline Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& X) {
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Eigen::ArrayXd var =
      (X.rowwise() - mean).array().square().colwise().mean();
  const Eigen::ArrayXd sd = var.sqrt().max(1e-8);
  return (X.rowwise() - mean).array().rowwise() / sd.transpose();
}

}  // namespace detail

inline KmeansResult kmeans(const Eigen::MatrixXd& X, int K, Rng& rng,
                           int restarts = 50, int max_iters = 300) {
  if (K < 1 || Eigen::Index(K) > X.rows()) {
    throw std::invalid_argument("kmeans: need 1 <= K <= n");
  }
  KmeansResult best;
  for (int r = 0; r < restarts; ++r) {
    KmeansResult cur = detail::kmeans_once(X, K, rng, max_iters);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

struct MsceResult {
  double value = 0.0;
  Eigen::VectorXd cluster_coverage;
};

// Mass-weighted squared deviation of cluster coverage from 1-alpha, clusters
// from K-means on the standardized covariates.
inline MsceResult msce(const Intervals& iv, const Eigen::MatrixXd& X_test,
                       const Eigen::VectorXd& y_test, double alpha, int K,
                       std::uint64_t seed) {
  if (Eigen::Index(K) > X_test.rows() || K < 1) {
    throw std::invalid_argument("msce: need 1 <= K <= n_test");
  }
  const Eigen::VectorXd z = coverage_indicator(iv, y_test);
  Rng rng(seed);
  const KmeansResult km =
      kmeans(detail::standardize_columns(X_test), K, rng);
  Eigen::VectorXd cov = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd cnt = Eigen::VectorXd::Zero(K);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    cov[km.assignment[std::size_t(i)]] += z[i];
    cnt[km.assignment[std::size_t(i)]] += 1.0;
  }
  MsceResult res;
  res.cluster_coverage = (cov.array() / cnt.array()).matrix();
  const double n = double(z.size());
  res.value = ((cnt / n).array() *
               (res.cluster_coverage.array() - (1.0 - alpha)).square())
                  .sum();
  return res;
}

// Minimum empirical coverage over slabs a <= v.x <= b of mass >= delta.
// The slab is chosen on a fit fraction of the test set and its coverage
// reported on the rest; the trivial full slab is always a candidate, so the
// result never exceeds the eval-split marginal coverage.
inline double wsc(const Intervals& iv, const Eigen::MatrixXd& X_test,
                  const Eigen::VectorXd& y_test, double alpha, double delta,
                  int directions, std::uint64_t seed,
                  double fit_fraction = 0.25) {
  (void)alpha;
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw std::invalid_argument(
        "wsc: delta must be in (0,1] (a slab cannot hold more than the full "
        "sample mass)");
  }
  if (directions < 1) throw std::invalid_argument("wsc: directions must be >= 1");
  const Eigen::Index n = X_test.rows();
  if (n < 4) throw std::invalid_argument("wsc: need at least 4 test points");
  const Eigen::VectorXd z = coverage_indicator(iv, y_test);

  Rng rng(seed);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index(0));
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::Index n_fit = Eigen::Index(fit_fraction * double(n));
  n_fit = std::clamp<Eigen::Index>(n_fit, 1, n - 1);
  const IndexList fit_idx(perm.begin(), perm.begin() + n_fit);
  const IndexList eval_idx(perm.begin() + n_fit, perm.end());
  const Eigen::MatrixXd Xf = take_rows(X_test, fit_idx);
  const Eigen::MatrixXd Xe = take_rows(X_test, eval_idx);
  const Eigen::VectorXd zf = take(z, fit_idx);
  const Eigen::VectorXd ze = take(z, eval_idx);

  double worst = ze.mean();
  Eigen::Index m_min = static_cast<Eigen::Index>(
      std::ceil(delta * double(n_fit) - 1e-9));
  m_min = std::clamp<Eigen::Index>(m_min, 1, n_fit);

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_fit));
  std::vector<double> proj(static_cast<std::size_t>(n_fit));
  std::vector<double> prefix(std::size_t(n_fit) + 1);
  for (int m = 0; m < directions; ++m) {
    Eigen::VectorXd v(X_test.cols());
    double norm = 0.0;
    while (norm == 0.0) {
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = gauss(rng);
      norm = v.norm();
    }
    v /= norm;
    const Eigen::VectorXd pf = Xf * v;
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return pf[a] < pf[b]; });
    prefix[0] = 0.0;
    for (Eigen::Index i = 0; i < n_fit; ++i) {
      proj[std::size_t(i)] = pf[order[std::size_t(i)]];
      prefix[std::size_t(i) + 1] =
          prefix[std::size_t(i)] + zf[order[std::size_t(i)]];
    }
    double best_cov = std::numeric_limits<double>::infinity();
    Eigen::Index best_i = 0, best_j = n_fit - 1;
    for (Eigen::Index i = 0; i + m_min <= n_fit; ++i) {
      for (Eigen::Index j = i + m_min - 1; j < n_fit; ++j) {
        const double covered = prefix[std::size_t(j) + 1] - prefix[std::size_t(i)];
        const double len = double(j - i + 1);
        if (covered < best_cov * len) {
          best_cov = covered / len;
          best_i = i;
          best_j = j;
        }
      }
    }
    const double a = proj[std::size_t(best_i)];
    const double b = proj[std::size_t(best_j)];
    const Eigen::VectorXd pe = Xe * v;
    double covered = 0.0, count = 0.0;
    for (Eigen::Index i = 0; i < pe.size(); ++i) {
      if (pe[i] >= a && pe[i] <= b) {
        covered += ze[i];
        count += 1.0;
      }
    }
    if (count > 0.0) worst = std::min(worst, covered / count);
  }
  return worst;
}

struct LogisticFit {
  Eigen::VectorXd w;
  double b = 0.0;
  double grad_norm = 0.0;
};

// Mean logistic loss with labels in {0,1}; optional gradient wrt (w, b).
inline double logistic_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& z,
                            const Eigen::VectorXd& w, double b,
                            Eigen::VectorXd* grad_w = nullptr,
                            double* grad_b = nullptr) {
  const Eigen::Index n = X.rows();
  const Eigen::VectorXd m = (X * w).array() + b;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += softplus(m[i]) - z[i] * m[i];
  }
  if (grad_w || grad_b) {
    Eigen::VectorXd p(n);
    for (Eigen::Index i = 0; i < n; ++i) p[i] = sigmoid(m[i]);
    const Eigen::VectorXd r = (p - z) / double(n);
    if (grad_w) *grad_w = X.transpose() * r;
    if (grad_b) *grad_b = r.sum();
  }
  return acc / double(n);
}

inline LogisticFit fit_logistic(const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& z, int iters,
                                double lr) {
  LogisticFit fit;
  fit.w = Eigen::VectorXd::Zero(X.cols());
  Eigen::VectorXd gw;
  double gb = 0.0;
  for (int it = 0; it < iters; ++it) {
    logistic_loss(X, z, fit.w, fit.b, &gw, &gb);
    fit.w -= lr * gw;
    fit.b -= lr * gb;
  }
  logistic_loss(X, z, fit.w, fit.b, &gw, &gb);
  fit.grad_norm = std::max(gw.cwiseAbs().maxCoeff(), std::abs(gb));
  return fit;
}

enum class ErtLoss { l1, l2 };

// Risk gap R(constant 1-alpha) - R(auditor) under the chosen loss; positive
// values mean the auditor found covariate-dependent coverage structure.
inline double ert_from_predictions(const Eigen::VectorXd& z,
                                   const Eigen::VectorXd& h, double alpha,
                                   ErtLoss loss) {
  if (z.size() != h.size() || z.size() == 0) {
    throw std::invalid_argument("ert_from_predictions: size mismatch");
  }
  const double c = 1.0 - alpha;
  double rh = 0.0, rc = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (loss == ErtLoss::l1) {
      rh += std::abs(h[i] - z[i]);
      rc += std::abs(c - z[i]);
    } else {
      rh += (h[i] - z[i]) * (h[i] - z[i]);
      rc += (c - z[i]) * (c - z[i]);
    }
  }
  return (rc - rh) / double(z.size());
}

struct ErtResult {
  double value = 0.0;
  bool converged = true;
};

inline ErtResult ert(const Intervals& iv, const Eigen::MatrixXd& X_test,
                     const Eigen::VectorXd& y_test, double alpha, ErtLoss loss,
                     int folds, std::uint64_t seed, int iters = 500,
                     double lr = 0.1) {
  const Eigen::Index n = X_test.rows();
  if (folds < 2) throw std::invalid_argument("ert: folds must be >= 2");
  if (n < Eigen::Index(folds) * 10) {
    throw std::invalid_argument("ert: need n_test >= folds * 10");
  }
  const Eigen::VectorXd z = coverage_indicator(iv, y_test);
  const Eigen::MatrixXd Xs = detail::standardize_columns(X_test);

  Rng rng(seed);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index(0));
  std::shuffle(perm.begin(), perm.end(), rng);

  Eigen::VectorXd h(n);
  ErtResult res;
  Eigen::Index start = 0;
  for (int k = 0; k < folds; ++k) {
    const Eigen::Index len = n / folds + (k < int(n % folds) ? 1 : 0);
    const IndexList hold(perm.begin() + start, perm.begin() + start + len);
    IndexList rest;
    rest.insert(rest.end(), perm.begin(), perm.begin() + start);
    rest.insert(rest.end(), perm.begin() + start + len, perm.end());
    start += len;
    const LogisticFit fit =
        fit_logistic(take_rows(Xs, rest), take(z, rest), iters, lr);
    if (fit.grad_norm > 1e-3) res.converged = false;
    const Eigen::VectorXd m =
        (take_rows(Xs, hold) * fit.w).array() + fit.b;
    for (std::size_t i = 0; i < hold.size(); ++i) {
      h[hold[i]] = sigmoid(m[Eigen::Index(i)]);
    }
  }
  res.value = ert_from_predictions(z, h, alpha, loss);
  return res;
}

inline MetricsReport evaluate_all(const Intervals& iv,
                                  const Eigen::MatrixXd& X_test,
                                  const Eigen::VectorXd& y_test, double alpha,
                                  const SyntheticProvenance* synthetic,
                                  const MetricsConfig& cfg,
                                  std::uint64_t seed) {
  MetricsReport rep;
  rep.config = cfg;
  std::tie(rep.coverage, rep.mean_length) = coverage_and_length(iv, y_test);
  rep.length_finite = std::isfinite(rep.mean_length);
  if (synthetic) {
    rep.conmae = conmae(synthetic->family, X_test.col(0), iv, alpha);
  }
  const MsceResult ms = msce(iv, X_test, y_test, alpha, cfg.msce_clusters,
                             stream_seed(seed, 0, "metrics-msce"));
  rep.msce = ms.value;
  rep.cluster_coverage = ms.cluster_coverage;
  rep.wsc = wsc(iv, X_test, y_test, alpha, cfg.wsc_delta, cfg.wsc_directions,
                stream_seed(seed, 0, "metrics-wsc"), cfg.wsc_fit_fraction);
  const ErtResult e1 = ert(iv, X_test, y_test, alpha, ErtLoss::l1,
                           cfg.ert_folds, stream_seed(seed, 0, "metrics-ert"),
                           cfg.ert_iters, cfg.ert_lr);
  const ErtResult e2 = ert(iv, X_test, y_test, alpha, ErtLoss::l2,
                           cfg.ert_folds, stream_seed(seed, 0, "metrics-ert"),
                           cfg.ert_iters, cfg.ert_lr);
  rep.ert_l1 = e1.value;
  rep.ert_l2 = e2.value;
  rep.ert_converged = e1.converged && e2.converged;
  return rep;
}

}  // namespace cocp
