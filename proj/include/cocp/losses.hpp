#pragma once

// Training losses. Scalar forms are exposed for direct evaluation; the
// Objective factories adapt them to the batch interface consumed by train():
// objective(outputs, targets, grad) returns the mean loss over rows and, when
// grad is non-null, d(mean loss)/d(outputs).
//
// Targets are passed as a matrix so that phase-fixed per-sample quantities
// ride along with y: column 0 is always y; folded_radius expects the frozen
// center predictions in column 1, soft_coverage the frozen radius predictions.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "cocp/numerics.hpp"

namespace cocp {

using Objective = std::function<double(
    const Eigen::MatrixXd& out, const Eigen::MatrixXd& targets,
    Eigen::MatrixXd* grad)>;

// rho_tau(u) = u * (tau - 1{u < 0}).
inline double pinball(double u, double tau) {
  return u * (tau - (u < 0.0 ? 1.0 : 0.0));
}

// Subgradient of rho_tau at the kink takes the u < 0 branch value, so ties
// |y-c| == r are treated as covered.
inline double pinball_deriv(double u, double tau) {
  return u > 0.0 ? tau : tau - 1.0;
}

// mean_i rho_{1-alpha}(|y_i - c_i| - r_i); optional subgradient wrt r.
inline double folded_radius_loss(const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& center,
                                 const Eigen::VectorXd& radius, double alpha,
                                 Eigen::VectorXd* grad_radius = nullptr) {
  const auto n = y.size();
  if (center.size() != n || radius.size() != n) {
    throw std::invalid_argument("folded_radius_loss: size mismatch");
  }
  const double tau = 1.0 - alpha;
  double acc = 0.0;
  if (grad_radius) grad_radius->resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = std::abs(y[i] - center[i]) - radius[i];
    acc += pinball(u, tau);
    // d rho_tau(u)/dr = -d rho_tau(u)/du.
    if (grad_radius) (*grad_radius)[i] = -pinball_deriv(u, tau) / double(n);
  }
  return acc / double(n);
}

// mean_i -sigmoid((r_i - |y_i - c_i|)/beta); optional gradient wrt c.
// sign(0) = 0 exactly at |y - c| = 0.
inline double soft_coverage_loss(const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& center,
                                 const Eigen::VectorXd& radius, double beta,
                                 Eigen::VectorXd* grad_center = nullptr) {
  const auto n = y.size();
  if (center.size() != n || radius.size() != n) {
    throw std::invalid_argument("soft_coverage_loss: size mismatch");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("soft_coverage_loss: beta must be positive");
  double acc = 0.0;
  if (grad_center) grad_center->resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = y[i] - center[i];
    const double z = (radius[i] - std::abs(d)) / beta;
    acc -= sigmoid(z);
    if (grad_center) {
      const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      (*grad_center)[i] = -sigmoid_deriv(z) / beta * s / double(n);
    }
  }
  return acc / double(n);
}

namespace detail {

inline void require_cols(const Eigen::MatrixXd& out,
                         const Eigen::MatrixXd& targets, Eigen::Index out_cols,
                         Eigen::Index target_cols, const char* what) {
  if (out.cols() != out_cols) {
    throw std::invalid_argument(std::string(what) + ": unexpected output width");
  }
  if (targets.cols() < target_cols || targets.rows() != out.rows()) {
    throw std::invalid_argument(std::string(what) + ": bad targets shape");
  }
}

}  // namespace detail

inline Objective make_mse_objective() {
  return [](const Eigen::MatrixXd& out, const Eigen::MatrixXd& targets,
            Eigen::MatrixXd* grad) {
    detail::require_cols(out, targets, 1, 1, "mse");
    const auto n = out.rows();
    const Eigen::ArrayXd r = out.col(0).array() - targets.col(0).array();
    if (grad) {
      grad->resize(n, 1);
      grad->col(0) = 2.0 * r / double(n);
    }
    return r.square().mean();
  };
}

inline Objective make_pinball_objective(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("pinball: tau must be in (0,1)");
  return [tau](const Eigen::MatrixXd& out, const Eigen::MatrixXd& targets,
               Eigen::MatrixXd* grad) {
    detail::require_cols(out, targets, 1, 1, "pinball");
    const auto n = out.rows();
    if (grad) grad->resize(n, 1);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = targets(i, 0) - out(i, 0);
      acc += pinball(u, tau);
      if (grad) (*grad)(i, 0) = -pinball_deriv(u, tau) / double(n);
    }
    return acc / double(n);
  };
}

// Radius phase: outputs are radii, targets carry (y, frozen center).
inline Objective make_folded_radius_objective(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("folded_radius: alpha must be in (0,1)");
  return [alpha](const Eigen::MatrixXd& out, const Eigen::MatrixXd& targets,
                 Eigen::MatrixXd* grad) {
    detail::require_cols(out, targets, 1, 2, "folded_radius");
    Eigen::VectorXd g;
    const double loss = folded_radius_loss(targets.col(0), targets.col(1),
                                           out.col(0), alpha,
                                           grad ? &g : nullptr);
    if (grad) {
      grad->resize(out.rows(), 1);
      grad->col(0) = g;
    }
    return loss;
  };
}

// Center phase: outputs are centers, targets carry (y, frozen radius).
inline Objective make_soft_coverage_objective(double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("soft_coverage: beta must be positive");
  return [beta](const Eigen::MatrixXd& out, const Eigen::MatrixXd& targets,
                Eigen::MatrixXd* grad) {
    detail::require_cols(out, targets, 1, 2, "soft_coverage");
    Eigen::VectorXd g;
    const double loss = soft_coverage_loss(targets.col(0), out.col(0),
                                           targets.col(1), beta,
                                           grad ? &g : nullptr);
    if (grad) {
      grad->resize(out.rows(), 1);
      grad->col(0) = g;
    }
    return loss;
  };
}

// Quantile pair for two-sided interval nets: outputs are (lo, hi) columns,
// loss is the sum of the two pinball terms averaged over rows.
inline Objective make_quantile_pair_objective(double tau_lo, double tau_hi) {
  if (!(tau_lo > 0.0 && tau_lo < tau_hi && tau_hi < 1.0)) {
    throw std::invalid_argument("quantile_pair: need 0 < tau_lo < tau_hi < 1");
  }
  return [tau_lo, tau_hi](const Eigen::MatrixXd& out,
                          const Eigen::MatrixXd& targets,
                          Eigen::MatrixXd* grad) {
    detail::require_cols(out, targets, 2, 1, "quantile_pair");
    const auto n = out.rows();
    if (grad) grad->resize(n, 2);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ulo = targets(i, 0) - out(i, 0);
      const double uhi = targets(i, 0) - out(i, 1);
      acc += pinball(ulo, tau_lo) + pinball(uhi, tau_hi);
      if (grad) {
        (*grad)(i, 0) = -pinball_deriv(ulo, tau_lo) / double(n);
        (*grad)(i, 1) = -pinball_deriv(uhi, tau_hi) / double(n);
      }
    }
    return acc / double(n);
  };
}

struct LossSpec {
  enum class Kind { mse, pinball, folded_radius, soft_coverage };
  Kind kind = Kind::mse;
  double param = 0.0;  // tau, alpha, or beta depending on kind
};

inline Objective make_objective(const LossSpec& spec) {
  switch (spec.kind) {
    case LossSpec::Kind::mse:
      return make_mse_objective();
    case LossSpec::Kind::pinball:
      return make_pinball_objective(spec.param);
    case LossSpec::Kind::folded_radius:
      return make_folded_radius_objective(spec.param);
    case LossSpec::Kind::soft_coverage:
      return make_soft_coverage_objective(spec.param);
  }
  throw std::invalid_argument("make_objective: unknown loss kind");
}

}  // namespace cocp
