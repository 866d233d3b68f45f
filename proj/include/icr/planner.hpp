#pragma once

// Iterative covariance regulation: gradient ascent of r(U) = log det Y_K over
// an open-loop twist sequence, with Y_K = Y_0 + sum_s M(T_s) and
// T_{s+1} = T_s exp(tau u_s^).

#include "icr/fov.hpp"
#include "icr/liegroup.hpp"
#include "icr/mapcore.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace icr {

using ControlMatrix = Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>;

/// K per-step twists applied for tau seconds each.
struct ControlSequence {
  std::vector<Twist> u;
  double tau = 0.5;

  ControlSequence() = default;
  ControlSequence(std::vector<Twist> steps, double step_duration) : u(std::move(steps)), tau(step_duration) {
    if (u.empty()) throw std::invalid_argument("ControlSequence: horizon must be at least one step");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("ControlSequence: tau must be positive");
  }

  static ControlSequence from_matrix(const ControlMatrix& m, double tau) {
    std::vector<Twist> steps;
    steps.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index k = 0; k < m.rows(); ++k) steps.emplace_back(Vector6(m.row(k).transpose()));
    return {std::move(steps), tau};
  }

  int horizon() const { return static_cast<int>(u.size()); }

  ControlMatrix matrix() const {
    ControlMatrix m(horizon(), 6);
    for (int k = 0; k < horizon(); ++k) m.row(k) = u[static_cast<std::size_t>(k)].vector().transpose();
    return m;
  }
};

/// Per-component step sizes with backtracking.
struct StepPolicy {
  Vector6 gamma0 = Vector6::Constant(1e-2);
  double backtrack = 0.5;
  int max_halvings = 20;
  bool line_search = true;
  /// Components held at their initial value (e.g. out-of-plane motion).
  std::array<bool, 6> frozen{};
  /// Optional symmetric box bound |u_i| <= max_abs_i.
  std::optional<Vector6> max_abs;

  void validate() const {
    if (!(gamma0.array() > 0.0).all()) throw std::invalid_argument("StepPolicy: step sizes must be positive");
    if (!(backtrack > 0.0 && backtrack < 1.0)) throw std::invalid_argument("StepPolicy: backtracking factor in (0, 1)");
    if (max_halvings < 0) throw std::invalid_argument("StepPolicy: negative halving budget");
    if (max_abs && !(max_abs->array() >= 0.0).all()) throw std::invalid_argument("StepPolicy: negative bound");
  }

  /// Freezes vz, wx and wy so plans stay SE(2)-embedded.
  static StepPolicy planar() {
    StepPolicy p;
    p.frozen = {false, false, true, true, true, false};
    return p;
  }
};

struct PlanResult {
  ControlSequence u_opt;
  std::vector<double> reward_trace;
  std::vector<double> grad_inf_norm_trace;
  std::vector<Pose> poses;  // T_1 .. T_K under u_opt
};

/// Everything the planner may read: the current pose, the belief's
/// information matrix and the cell layout. It never sees occupancy labels.
struct PlanningProblem {
  Pose start;
  Information prior;
  const GridGeometry* grid = nullptr;
  ConeFov fov;

  const GridGeometry& cells() const {
    if (!grid) throw std::invalid_argument("PlanningProblem: no grid");
    return *grid;
  }
};

/// Derivatives of exp(tau u^) with respect to the six twist components.
using ExpDerivative = std::function<std::array<Matrix4, 6>(double, const Twist&)>;

inline std::array<Matrix4, 6> default_exp_derivative(double tau, const Twist& u) { return dexp_du_all(tau, u); }

struct ForwardResult {
  std::vector<Pose> poses;  // T_0 .. T_K
  Information info;         // Y_K
};

inline ForwardResult forward_pass(const PlanningProblem& prob, const ControlSequence& U) {
  ForwardResult out{{prob.start}, prob.prior};
  if (prob.prior.size() != prob.cells().size())
    throw std::invalid_argument("forward_pass: prior and grid sizes differ");
  out.poses.reserve(U.u.size() + 1);
  for (const auto& u : U.u) {
    out.poses.push_back(compose(out.poses.back(), exp_twist(U.tau, u)));
    out.info.add_diagonal(info_contribution(out.poses.back(), prob.cells(), prob.fov));
  }
  return out;
}

inline double reward(const PlanningProblem& prob, const ControlSequence& U) {
  return forward_pass(prob, U).info.log_det();
}

/// Lambda_s = dT_s / du_k^(i) for s = k+1 .. K, by Lambda_{k+1} = T_k dexp_i and
/// Lambda_s = Lambda_{s-1} exp(tau u_{s-1}^).
inline std::vector<Matrix4> pose_sensitivities(const std::vector<Pose>& poses, const ControlSequence& U, int k,
                                               int i) {
  std::vector<Matrix4> lambdas;
  const int K = U.horizon();
  lambdas.push_back(poses[static_cast<std::size_t>(k)].matrix() * dexp_du(U.tau, U.u[static_cast<std::size_t>(k)], i));
  for (int s = k + 2; s <= K; ++s)
    lambdas.push_back(lambdas.back() * exp_twist(U.tau, U.u[static_cast<std::size_t>(s - 1)]).matrix());
  return lambdas;
}

/// dr/du_k^(i) = sum_{s>k} tr(Y_K^-1 dM(T_s)/du_k^(i)).
///
/// The per-cell chain rule gives, with G = T_s^-1 Lambda_s and homogeneous
/// body coordinates q_j,
///   dM_jj/du = (1/sigma^2) Phi'(d_j) grad d_j^T (G q_j)_xy,
/// so the trace collapses to <G_xy, C_s> with C_s = sum_j c_j q_j^T and
/// c_j = Phi'(d_j) grad d_j / (sigma^2 Y_jj). C_s depends only on T_s, making
/// the whole gradient O(K n + K^2).
inline ControlMatrix gradient(const PlanningProblem& prob, const ControlSequence& U,
                              const ExpDerivative& dexp = default_exp_derivative) {
  const int K = U.horizon();
  const ForwardResult fwd = forward_pass(prob, U);
  const VectorXd y_inv = fwd.info.inverse_diagonal();
  const GridGeometry& grid = prob.cells();
  const ConeSdf sdf(prob.fov);
  const double cutoff = prob.fov.reach() + negligible_distance(prob.fov);
  const double inv_var = 1.0 / (prob.fov.sigma * prob.fov.sigma);

  std::vector<Eigen::Matrix<double, 2, 4>> C(static_cast<std::size_t>(K + 1));
  std::vector<Matrix4> T_inv(static_cast<std::size_t>(K + 1));
  for (int s = 1; s <= K; ++s) {
    const Pose& T = fwd.poses[static_cast<std::size_t>(s)];
    T_inv[static_cast<std::size_t>(s)] = inverse_matrix(T.matrix());
    const Matrix3 Rt = T.rotation().transpose();
    const Vector3 t = T.position();
    Eigen::Matrix<double, 2, 4> acc = Eigen::Matrix<double, 2, 4>::Zero();
    for (int j = 0; j < grid.size(); ++j) {
      const Vector3 q = Rt * (grid.position(j) - t);
      if (q.head<2>().squaredNorm() > cutoff * cutoff) continue;
      const SdfEval e = sdf(q.head<2>());
      const Vector2 c = (probit_deriv(e.d, prob.fov.kappa) * inv_var * y_inv[j]) * e.grad;
      acc.leftCols<3>() += c * q.transpose();
      acc.col(3) += c;
    }
    C[static_cast<std::size_t>(s)] = acc;
  }

  ControlMatrix g = ControlMatrix::Zero(K, 6);
  for (int k = 0; k < K; ++k) {
    const auto dE = dexp(U.tau, U.u[static_cast<std::size_t>(k)]);
    for (int i = 0; i < 6; ++i) {
      Matrix4 lambda = fwd.poses[static_cast<std::size_t>(k)].matrix() * dE[static_cast<std::size_t>(i)];
      double sum = 0.0;
      for (int s = k + 1; s <= K; ++s) {
        if (s > k + 1) lambda = lambda * exp_twist(U.tau, U.u[static_cast<std::size_t>(s - 1)]).matrix();
        const Matrix4 G = T_inv[static_cast<std::size_t>(s)] * lambda;
        sum += (G.topRows<2>().cwiseProduct(C[static_cast<std::size_t>(s)])).sum();
      }
      g(k, i) = sum;
    }
  }
  return g;
}

namespace detail {

inline ControlSequence apply_bounds(ControlMatrix m, double tau, const StepPolicy& policy) {
  if (policy.max_abs)
    for (Eigen::Index k = 0; k < m.rows(); ++k)
      for (int i = 0; i < 6; ++i) m(k, i) = std::clamp(m(k, i), -(*policy.max_abs)[i], (*policy.max_abs)[i]);
  return ControlSequence::from_matrix(m, tau);
}

inline void zero_frozen(ControlMatrix& g, const StepPolicy& policy) {
  for (int i = 0; i < 6; ++i)
    if (policy.frozen[static_cast<std::size_t>(i)]) g.col(i).setZero();
}

}  // namespace detail

/// Gradient ascent U <- U + Gamma dr/dU. With line search the step is
/// scaled by `backtrack` until the reward does not decrease; an iteration
/// with no acceptable step ends the run. Returns the best sequence seen.
inline PlanResult icr_optimize(const PlanningProblem& prob, const ControlSequence& U0, const StepPolicy& policy,
                               int iters, const ExpDerivative& dexp = default_exp_derivative) {
  if (iters < 1) throw std::invalid_argument("icr_optimize: at least one iteration required");
  policy.validate();
  const double tau = U0.tau;
  ControlSequence U = detail::apply_bounds(U0.matrix(), tau, policy);
  double r = reward(prob, U);
  ControlMatrix g = gradient(prob, U, dexp);
  detail::zero_frozen(g, policy);

  PlanResult res;
  res.reward_trace.push_back(r);
  res.grad_inf_norm_trace.push_back(g.cwiseAbs().maxCoeff());
  ControlSequence best = U;
  double best_r = r;

  for (int it = 0; it < iters; ++it) {
    if (!g.allFinite() || g.cwiseAbs().maxCoeff() == 0.0) break;
    ControlMatrix step = g;
    for (int i = 0; i < 6; ++i) step.col(i) *= policy.gamma0[i];
    double scale = 1.0;
    std::optional<ControlSequence> next;
    double next_r = r;
    const int attempts = policy.line_search ? policy.max_halvings + 1 : 1;
    for (int a = 0; a < attempts; ++a, scale *= policy.backtrack) {
      ControlSequence cand = detail::apply_bounds(U.matrix() + scale * step, tau, policy);
      const double cand_r = reward(prob, cand);
      if (!policy.line_search || cand_r >= r) {
        next = std::move(cand);
        next_r = cand_r;
        break;
      }
    }
    if (!next || !std::isfinite(next_r)) break;
    U = std::move(*next);
    r = next_r;
    g = gradient(prob, U, dexp);
    detail::zero_frozen(g, policy);
    res.reward_trace.push_back(r);
    res.grad_inf_norm_trace.push_back(g.cwiseAbs().maxCoeff());
    if (r > best_r) {
      best = U;
      best_r = r;
    }
  }
  res.u_opt = best;
  auto poses = forward_pass(prob, best).poses;
  res.poses.assign(poses.begin() + 1, poses.end());
  return res;
}

}  // namespace icr
