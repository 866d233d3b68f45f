#pragma once

// Central finite-difference checks for the iCR reward gradient and the
// tracking covariance sensitivities.

#include "icr/mapcore.hpp"
#include "icr/planner.hpp"
#include "icr/tracking.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

namespace icr {

/// |a - f| / max(|a|, |f|, abs_floor / rel_tol): a value <= rel_tol means a
/// relative error within rel_tol or an absolute error within abs_floor.
inline double scaled_error(double analytic, double numeric, double rel_tol, double abs_floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), abs_floor / rel_tol});
  const double diff = std::abs(analytic - numeric);
  return scale > 0.0 ? diff / scale : diff;
}

/// (f(x + h) - f(x - h)) / 2h for every entry of a control matrix.
template <class F>
ControlMatrix central_difference(F&& f, const ControlMatrix& x, double h) {
  ControlMatrix g(x.rows(), 6);
  for (Eigen::Index k = 0; k < x.rows(); ++k)
    for (int i = 0; i < 6; ++i) {
      ControlMatrix xp = x, xm = x;
      xp(k, i) += h;
      xm(k, i) -= h;
      g(k, i) = (f(xp) - f(xm)) / (2.0 * h);
    }
  return g;
}

/// Random planning instance that owns its grid.
struct IcrInstance {
  std::shared_ptr<const GridGeometry> grid;
  PlanningProblem problem;
  ControlSequence controls;
};

inline IcrInstance random_icr_instance(std::mt19937_64& rng, int K, int max_side, double resolution, bool dense,
                                       bool spatial, const ConeFov& fov = {}) {
  std::uniform_int_distribution<int> side(2, max_side);
  auto grid = std::make_shared<const GridGeometry>(side(rng), side(rng), resolution);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const int n = grid->size();

  Information prior;
  if (dense) {
    MatrixXd B = MatrixXd::NullaryExpr(n, 3, [&] { return between(-0.3, 0.3); });
    MatrixXd Y = B * B.transpose();
    for (int j = 0; j < n; ++j) Y(j, j) += between(0.05, 2.0);
    prior = Information::dense(0.5 * (Y + Y.transpose()));
  } else {
    prior = Information::diagonal(VectorXd::NullaryExpr(n, [&] { return between(0.01, 2.0); }));
  }

  const Vector2 lo = grid->extent_min(), hi = grid->extent_max();
  const Pose start = Pose::planar(between(lo.x() - 1.0, hi.x()), between(lo.y(), hi.y()), between(-std::numbers::pi, std::numbers::pi));
  std::vector<Twist> steps;
  for (int k = 0; k < K; ++k) {
    Vector6 u;
    u << between(0.0, 1.5), between(-0.5, 0.5), 0.0, 0.0, 0.0, between(-1.0, 1.0);
    if (spatial) {
      u[2] = between(-0.1, 0.1);
      u[3] = between(-0.1, 0.1);
      u[4] = between(-0.1, 0.1);
    }
    steps.emplace_back(u);
  }
  PlanningProblem prob{start, std::move(prior), grid.get(), fov};
  return {grid, std::move(prob), ControlSequence(std::move(steps), 0.5)};
}

struct GradientComparison {
  ControlMatrix analytic;
  ControlMatrix numeric;
  ControlMatrix error;  // scaled_error per entry
  double max_error = 0.0;
  int worst_k = 0;
  int worst_i = 0;
};

inline GradientComparison compare(const ControlMatrix& analytic, const ControlMatrix& numeric, double rel_tol,
                                  double abs_floor) {
  GradientComparison c{analytic, numeric, ControlMatrix::Zero(analytic.rows(), 6), 0.0, 0, 0};
  for (Eigen::Index k = 0; k < analytic.rows(); ++k)
    for (int i = 0; i < 6; ++i) {
      const double e = scaled_error(analytic(k, i), numeric(k, i), rel_tol, abs_floor);
      c.error(k, i) = std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
      if (c.error(k, i) > c.max_error) {
        c.max_error = c.error(k, i);
        c.worst_k = static_cast<int>(k);
        c.worst_i = i;
      }
    }
  return c;
}

inline GradientComparison check_icr_gradient(const PlanningProblem& prob, const ControlSequence& U, double h,
                                             double rel_tol, double abs_floor,
                                             const ExpDerivative& dexp = default_exp_derivative) {
  const ControlMatrix analytic = gradient(prob, U, dexp);
  const ControlMatrix numeric = central_difference(
      [&](const ControlMatrix& m) { return reward(prob, ControlSequence::from_matrix(m, U.tau)); }, U.matrix(), h);
  return compare(analytic, numeric, rel_tol, abs_floor);
}

/// Test hook: a deliberately wrong exp derivative (the rotation-rate
/// derivative is scaled by 1.5).
inline std::array<Matrix4, 6> corrupted_exp_derivative(double tau, const Twist& u) {
  auto d = dexp_du_all(tau, u);
  d[5] *= 1.5;
  return d;
}

/// Random tracking instance: robot near the origin, target a few meters away.
inline std::pair<tracking::TrackingProblem, ControlSequence> random_tracking_instance(std::mt19937_64& rng, int tf,
                                                                                     tracking::Sensor sensor) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  Eigen::Vector4d mu0(between(3.0, 5.0), between(3.0, 5.0), between(-0.3, 0.3), between(-0.3, 0.3));
  Eigen::Matrix4d B = Eigen::Matrix4d::NullaryExpr([&] { return between(-0.3, 0.3); });
  Eigen::Matrix4d Sigma0 = B * B.transpose() + 0.2 * Eigen::Matrix4d::Identity();
  tracking::TrackingProblem prob{Pose::planar(between(-0.5, 0.5), between(-0.5, 0.5), between(-0.5, 0.5)),
                                 tracking::TargetModel::constant_velocity(0.5, between(0.001, 0.05), mu0, Sigma0),
                                 {sensor, 0.1},
                                 {}};
  std::vector<double> w(static_cast<std::size_t>(tf));
  for (auto& b : w) b = between(0.0, 1.0);
  prob.weights = w;
  std::vector<Twist> steps;
  for (int t = 0; t < tf; ++t) steps.push_back(Twist::planar(between(0.2, 1.0), between(-0.3, 0.3), between(-0.5, 0.5)));
  return {prob, ControlSequence(std::move(steps), 0.5)};
}

/// Worst scaled error of a_(k,t) against central differences of Sigma_t over
/// all (k, i, t) and matrix entries, reported per (k, i).
inline GradientComparison check_tracking_sensitivity(const tracking::TrackingProblem& prob, const ControlSequence& U,
                                                     double h, double rel_tol, double abs_floor) {
  const int tf = U.horizon();
  const auto r = tracking::rollout(prob, U);
  GradientComparison c{ControlMatrix::Zero(tf, 6), ControlMatrix::Zero(tf, 6), ControlMatrix::Zero(tf, 6), 0.0, 0, 0};
  for (int k = 0; k < tf; ++k)
    for (int i = 0; i < 6; ++i) {
      const auto a = tracking::covariance_sensitivities(prob, U, r, k, i);
      ControlMatrix up = U.matrix(), dn = U.matrix();
      up(k, i) += h;
      dn(k, i) -= h;
      const auto rp = tracking::rollout(prob, ControlSequence::from_matrix(up, U.tau));
      const auto rm = tracking::rollout(prob, ControlSequence::from_matrix(dn, U.tau));
      double worst = 0.0;
      for (int t = k + 1; t <= tf; ++t) {
        const MatrixXd fd = (rp.Sigma[static_cast<std::size_t>(t)] - rm.Sigma[static_cast<std::size_t>(t)]) / (2.0 * h);
        const MatrixXd& an = a[static_cast<std::size_t>(t - k - 1)];
        const double scale = std::max({an.cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff(), abs_floor / rel_tol});
        const double e = (an - fd).cwiseAbs().maxCoeff() / scale;
        if (e > worst) {
          worst = e;
          c.analytic(k, i) = an.cwiseAbs().maxCoeff();
          c.numeric(k, i) = fd.cwiseAbs().maxCoeff();
        }
      }
      c.error(k, i) = worst;
      if (worst > c.max_error) {
        c.max_error = worst;
        c.worst_k = k;
        c.worst_i = i;
      }
    }
  return c;
}

inline GradientComparison check_tracking_gradient(const tracking::TrackingProblem& prob, const ControlSequence& U,
                                                  double h, double rel_tol, double abs_floor) {
  const ControlMatrix analytic = tracking::tracking_gradient(prob, U);
  const ControlMatrix numeric = central_difference(
      [&](const ControlMatrix& m) { return tracking::tracking_cost(prob, ControlSequence::from_matrix(m, U.tau)); },
      U.matrix(), h);
  return compare(analytic, numeric, rel_tol, abs_floor);
}

}  // namespace icr
