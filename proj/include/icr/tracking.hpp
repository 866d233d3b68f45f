#pragma once

// Active target tracking: a robot on SE(2) chooses an open-loop twist
// sequence minimizing sum_t b_t log det Sigma_t, where the target covariance
// follows the Kalman Riccati map Sigma_t = A (Sigma_{t-1}^-1 + M(T_t))^-1 A^T + W
// and M(T) = H(T)^T V^-1 H(T) linearizes a range or bearing measurement at
// the prior target mean.

#include "icr/liegroup.hpp"
#include "icr/planner.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace icr::tracking {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Sensor { range, bearing };

inline std::string_view to_string(Sensor s) { return s == Sensor::range ? "range" : "bearing"; }

/// Robot/target separation below which the measurement direction is undefined.
inline constexpr double kCoincidenceEps = 1e-8;

/// Linear target motion y' = A y + w, w ~ N(0, W); S selects the planar position.
struct TargetModel {
  MatrixXd A;
  MatrixXd W;
  MatrixXd S;
  VectorXd mu0;
  MatrixXd Sigma0;

  int dim() const { return static_cast<int>(A.rows()); }

  void validate() const {
    const auto n = A.rows();
    if (n < 2 || A.cols() != n || W.rows() != n || W.cols() != n || S.rows() != 2 || S.cols() != n ||
        mu0.size() != n || Sigma0.rows() != n || Sigma0.cols() != n)
      throw std::invalid_argument("TargetModel: inconsistent dimensions");
    if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("TargetModel: W must be symmetric");
    if (Eigen::SelfAdjointEigenSolver<MatrixXd>(W).eigenvalues().minCoeff() < -1e-12)
      throw std::invalid_argument("TargetModel: W must be positive semidefinite");
    if (Eigen::LLT<MatrixXd>(Sigma0).info() != Eigen::Success)
      throw std::invalid_argument("TargetModel: Sigma0 must be positive definite");
  }

  /// Planar constant-velocity target with diffusion strength q.
  static TargetModel constant_velocity(double tau, double q, const VectorXd& mu0, const MatrixXd& Sigma0) {
    const MatrixXd I2 = MatrixXd::Identity(2, 2);
    TargetModel m;
    m.A = MatrixXd::Identity(4, 4);
    m.A.topRightCorner(2, 2) = tau * I2;
    m.W.resize(4, 4);
    m.W << tau * tau * tau / 3.0 * I2, tau * tau / 2.0 * I2, tau * tau / 2.0 * I2, tau * I2;
    m.W *= q;
    m.S = MatrixXd::Zero(2, 4);
    m.S.leftCols(2) = I2;
    m.mu0 = mu0;
    m.Sigma0 = Sigma0;
    m.validate();
    return m;
  }

  /// Static planar target: A = I, W = eps I (eps = 0 allowed).
  static TargetModel static_target(double eps, const VectorXd& mu0, const MatrixXd& Sigma0) {
    TargetModel m;
    m.A = MatrixXd::Identity(2, 2);
    m.W = eps * MatrixXd::Identity(2, 2);
    m.S = MatrixXd::Identity(2, 2);
    m.mu0 = mu0;
    m.Sigma0 = Sigma0;
    m.validate();
    return m;
  }
};

struct TargetBelief {
  VectorXd yhat;
  MatrixXd Sigma;
};

/// Measurement model with noise variance `noise_var` (scalar range, or
/// isotropic 2x2 for the unit bearing vector).
struct MeasurementModel {
  Sensor sensor = Sensor::range;
  double noise_var = 0.1;

  int rows() const { return sensor == Sensor::range ? 1 : 2; }
  MatrixXd V_inv() const { return MatrixXd::Identity(rows(), rows()) / noise_var; }
};

namespace detail {

inline Vector2 planar_position(const Matrix4& T) { return T.block<2, 1>(0, 3); }
inline Eigen::Matrix2d planar_rotation(const Matrix4& T) { return T.block<2, 2>(0, 0); }

inline void check_separation(const Vector2& xi) {
  if (xi.norm() < kCoincidenceEps) throw std::domain_error("tracking: robot and target coincide");
}

// P(xi) = I / |xi| - xi xi^T / |xi|^3, the Jacobian of xi / |xi|.
inline Eigen::Matrix2d normalize_jacobian(const Vector2& xi) {
  const double n = xi.norm();
  return Eigen::Matrix2d::Identity() / n - xi * xi.transpose() / (n * n * n);
}

}  // namespace detail

/// |Q T e - S m|.
inline double h_range(const Pose& T, const VectorXd& m, const MatrixXd& S) {
  return (detail::planar_position(T.matrix()) - S * m).norm();
}

/// Unit vector from the robot to the target expressed in the robot frame.
inline Vector2 h_bearing(const Pose& T, const VectorXd& m, const MatrixXd& S) {
  const Vector2 xi = detail::planar_rotation(T.matrix()).transpose() * (S * m - detail::planar_position(T.matrix()));
  detail::check_separation(xi);
  return xi / xi.norm();
}

/// H1 = -xi^T S / |xi| with xi = robot position - S mu0.
inline MatrixXd H_range(const Pose& T, const VectorXd& mu0, const MatrixXd& S) {
  const Vector2 xi = detail::planar_position(T.matrix()) - S * mu0;
  detail::check_separation(xi);
  return -(xi.transpose() * S) / xi.norm();
}

/// H2 = P(xi) R^T S with xi = R^T (S mu0 - robot position).
inline MatrixXd H_bearing(const Pose& T, const VectorXd& mu0, const MatrixXd& S) {
  const Eigen::Matrix2d Rt = detail::planar_rotation(T.matrix()).transpose();
  const Vector2 xi = Rt * (S * mu0 - detail::planar_position(T.matrix()));
  detail::check_separation(xi);
  return detail::normalize_jacobian(xi) * Rt * S;
}

inline MatrixXd H_of(const Pose& T, const MeasurementModel& sensor, const TargetModel& model) {
  return sensor.sensor == Sensor::range ? H_range(T, model.mu0, model.S) : H_bearing(T, model.mu0, model.S);
}

/// M(T) = H^T V^-1 H.
inline MatrixXd info_matrix(const Pose& T, const MeasurementModel& sensor, const TargetModel& model) {
  const MatrixXd H = H_of(T, sensor, model);
  return H.transpose() * sensor.V_inv() * H;
}

/// Directional derivative of H along a pose perturbation dT.
inline MatrixXd dH_du(const Pose& T, const Matrix4& dT, const MeasurementModel& sensor, const TargetModel& model) {
  const Matrix4& Tm = T.matrix();
  const Vector2 p = detail::planar_position(Tm);
  const Vector2 dp = detail::planar_position(dT);
  if (sensor.sensor == Sensor::range) {
    const Vector2 xi = p - model.S * model.mu0;
    detail::check_separation(xi);
    const double n = xi.norm();
    return -(dp.transpose() * model.S) / n + (xi.dot(dp) / (n * n * n)) * (xi.transpose() * model.S);
  }
  const Eigen::Matrix2d Rt = detail::planar_rotation(Tm).transpose();
  const Eigen::Matrix2d dRt = detail::planar_rotation(dT).transpose();
  const Vector2 rel = model.S * model.mu0 - p;
  const Vector2 xi = Rt * rel;
  detail::check_separation(xi);
  const Vector2 dxi = dRt * rel - Rt * dp;
  const double n = xi.norm(), n3 = n * n * n;
  const double xd = xi.dot(dxi);
  const Eigen::Matrix2d dP = -(xd / n3) * Eigen::Matrix2d::Identity() -
                             (dxi * xi.transpose() + xi * dxi.transpose()) / n3 +
                             (3.0 * xd / (n3 * n * n)) * xi * xi.transpose();
  return dP * Rt * model.S + detail::normalize_jacobian(xi) * dRt * model.S;
}

/// dM/du = D(H^T V^-1 dH) with D(X) = X + X^T.
inline MatrixXd dM_du(const Pose& T, const Matrix4& dT, const MeasurementModel& sensor, const TargetModel& model) {
  const MatrixXd X = H_of(T, sensor, model).transpose() * sensor.V_inv() * dH_du(T, dT, sensor, model);
  return X + X.transpose();
}

/// Kalman Riccati map A (Sigma^-1 + M)^-1 A^T + W.
inline MatrixXd riccati(const MatrixXd& Sigma, const MatrixXd& M, const TargetModel& model) {
  const Eigen::LLT<MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success) throw std::domain_error("riccati: covariance is singular");
  const auto n = Sigma.rows();
  const MatrixXd info = llt.solve(MatrixXd::Identity(n, n)) + M;
  const Eigen::LLT<MatrixXd> post(info);
  if (post.info() != Eigen::Success) throw std::domain_error("riccati: Sigma^-1 + M is not invertible");
  MatrixXd out = model.A * post.solve(MatrixXd::Identity(n, n)) * model.A.transpose() + model.W;
  return 0.5 * (out + out.transpose());
}

/// a_t = A G (a_{t-1} - Sigma_{t-1} dM Sigma_{t-1}) G^T A^T, G = (I + Sigma_{t-1} M)^-1.
/// With a_prev = 0 this is the sensitivity of the first affected step.
inline MatrixXd sensitivity_recursion(const MatrixXd& a_prev, const MatrixXd& Sigma_prev, const MatrixXd& M,
                                      const MatrixXd& dM, const TargetModel& model) {
  const auto n = Sigma_prev.rows();
  const Eigen::FullPivLU<MatrixXd> lu(MatrixXd::Identity(n, n) + Sigma_prev * M);
  if (!lu.isInvertible()) throw std::domain_error("sensitivity_recursion: I + Sigma M is singular");
  const MatrixXd G = lu.inverse();
  MatrixXd a = model.A * G * (a_prev - Sigma_prev * dM * Sigma_prev) * G.transpose() * model.A.transpose();
  return 0.5 * (a + a.transpose());
}

struct TrackingProblem {
  Pose start;
  TargetModel model;
  MeasurementModel sensor;
  /// Stage weights b_1 .. b_tf; empty means the terminal cost only.
  std::vector<double> weights;

  std::vector<double> stage_weights(int tf) const {
    if (weights.empty()) {
      std::vector<double> b(static_cast<std::size_t>(tf), 0.0);
      b.back() = 1.0;
      return b;
    }
    if (static_cast<int>(weights.size()) != tf) throw std::invalid_argument("TrackingProblem: need one weight per step");
    return weights;
  }
};

struct Rollout {
  std::vector<Pose> poses;       // T_0 .. T_tf
  std::vector<MatrixXd> Sigma;   // Sigma_0 .. Sigma_tf
  std::vector<MatrixXd> M;       // M(T_t), entry 0 unused
};

inline Rollout rollout(const TrackingProblem& prob, const ControlSequence& U) {
  Rollout r;
  r.poses.push_back(prob.start);
  r.Sigma.push_back(prob.model.Sigma0);
  r.M.emplace_back();
  for (const auto& u : U.u) {
    r.poses.push_back(compose(r.poses.back(), exp_twist(U.tau, u)));
    r.M.push_back(info_matrix(r.poses.back(), prob.sensor, prob.model));
    r.Sigma.push_back(riccati(r.Sigma.back(), r.M.back(), prob.model));
  }
  return r;
}

inline double log_det_spd(const MatrixXd& X) {
  const Eigen::LLT<MatrixXd> llt(X);
  if (llt.info() != Eigen::Success) throw std::domain_error("log_det: matrix is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

inline double tracking_cost(const TrackingProblem& prob, const ControlSequence& U) {
  const Rollout r = rollout(prob, U);
  const auto b = prob.stage_weights(U.horizon());
  double J = 0.0;
  for (int t = 1; t <= U.horizon(); ++t)
    if (b[static_cast<std::size_t>(t - 1)] != 0.0) J += b[static_cast<std::size_t>(t - 1)] * log_det_spd(r.Sigma[static_cast<std::size_t>(t)]);
  return J;
}

/// Sensitivities a_(k,t) = dSigma_t / du_k^(i) for t = k+1 .. tf.
inline std::vector<MatrixXd> covariance_sensitivities(const TrackingProblem& prob, const ControlSequence& U,
                                                      const Rollout& r, int k, int i) {
  const auto lambdas = pose_sensitivities(r.poses, U, k, i);
  std::vector<MatrixXd> a;
  MatrixXd prev = MatrixXd::Zero(prob.model.dim(), prob.model.dim());
  for (int t = k + 1; t <= U.horizon(); ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const MatrixXd dM = dM_du(r.poses[ts], lambdas[static_cast<std::size_t>(t - k - 1)], prob.sensor, prob.model);
    prev = sensitivity_recursion(prev, r.Sigma[ts - 1], r.M[ts], dM, prob.model);
    a.push_back(prev);
  }
  return a;
}

/// dJ/du_k^(i) = sum_{t>k} b_t tr(Sigma_t^-1 a_(k,t)).
inline ControlMatrix tracking_gradient(const TrackingProblem& prob, const ControlSequence& U) {
  const int tf = U.horizon();
  const Rollout r = rollout(prob, U);
  const auto b = prob.stage_weights(tf);
  std::vector<MatrixXd> Sigma_inv(static_cast<std::size_t>(tf + 1));
  for (int t = 1; t <= tf; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    Sigma_inv[ts] = Eigen::LLT<MatrixXd>(r.Sigma[ts]).solve(MatrixXd::Identity(prob.model.dim(), prob.model.dim()));
  }
  ControlMatrix g = ControlMatrix::Zero(tf, 6);
  for (int k = 0; k < tf; ++k)
    for (int i = 0; i < 6; ++i) {
      const auto a = covariance_sensitivities(prob, U, r, k, i);
      double sum = 0.0;
      for (int t = k + 1; t <= tf; ++t) {
        const double bt = b[static_cast<std::size_t>(t - 1)];
        if (bt != 0.0) sum += bt * (Sigma_inv[static_cast<std::size_t>(t)] * a[static_cast<std::size_t>(t - k - 1)]).trace();
      }
      g(k, i) = sum;
    }
  return g;
}

struct TrackResult {
  ControlSequence u;
  std::vector<double> cost_trace;
  std::vector<double> grad_inf_norm_trace;
  bool stopped_non_finite = false;
};

/// Fixed-step descent u_k^(i) <- u_k^(i) - alpha^(i) dJ/du_k^(i) over the
/// components not frozen. Trace entry m holds the cost and gradient before
/// update m + 1; the last entry describes the returned sequence.
inline TrackResult tracking_gd(const TrackingProblem& prob, const ControlSequence& U0, const Vector6& alpha,
                               const std::array<bool, 6>& frozen, int iters) {
  if (iters < 1) throw std::invalid_argument("tracking_gd: at least one iteration required");
  if ((alpha.array() < 0.0).any()) throw std::invalid_argument("tracking_gd: step sizes must be non-negative");
  TrackResult res{U0, {}, {}, false};
  auto evaluate = [&](const ControlSequence& U, ControlMatrix& g) {
    const double J = tracking_cost(prob, U);
    g = tracking_gradient(prob, U);
    for (int i = 0; i < 6; ++i)
      if (frozen[static_cast<std::size_t>(i)]) g.col(i).setZero();
    return J;
  };
  ControlMatrix g;
  double J = evaluate(res.u, g);
  res.cost_trace.push_back(J);
  res.grad_inf_norm_trace.push_back(g.cwiseAbs().maxCoeff());
  for (int it = 0; it < iters; ++it) {
    ControlMatrix m = res.u.matrix();
    for (int i = 0; i < 6; ++i) m.col(i) -= alpha[i] * g.col(i);
    if (!m.allFinite()) {
      res.stopped_non_finite = true;
      break;
    }
    ControlSequence next = ControlSequence::from_matrix(m, res.u.tau);
    ControlMatrix g_next;
    double J_next;
    try {
      J_next = evaluate(next, g_next);
    } catch (const std::domain_error&) {
      res.stopped_non_finite = true;
      break;
    }
    if (!std::isfinite(J_next) || !g_next.allFinite()) {
      res.stopped_non_finite = true;
      break;
    }
    res.u = std::move(next);
    g = std::move(g_next);
    J = J_next;
    res.cost_trace.push_back(J);
    res.grad_inf_norm_trace.push_back(g.cwiseAbs().maxCoeff());
  }
  return res;
}

/// One-step cost log det(A (Sigma0^-1 + M(p))^-1 A^T + W) with the robot at
/// p (heading 0). Entries where the robot sits on the target mean are NaN.
inline MatrixXd cost_map(const std::vector<double>& xs, const std::vector<double>& ys, const MeasurementModel& sensor,
                         const TargetModel& model) {
  MatrixXd J(static_cast<Eigen::Index>(ys.size()), static_cast<Eigen::Index>(xs.size()));
  for (std::size_t r = 0; r < ys.size(); ++r)
    for (std::size_t c = 0; c < xs.size(); ++c) {
      try {
        const Pose T = Pose::planar(xs[c], ys[r], 0.0);
        J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            log_det_spd(riccati(model.Sigma0, info_matrix(T, sensor, model), model));
      } catch (const std::domain_error&) {
        J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  return J;
}

}  // namespace icr::tracking
