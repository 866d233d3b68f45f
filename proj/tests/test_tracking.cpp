#include "icr/gradcheck.hpp"
#include "icr/tracking.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace icr;
using namespace icr::tracking;

namespace {

TargetModel fixture_model() { return TargetModel::static_target(0.0, Vector2(3.0, 4.0), Vector2(0.3, 0.7).asDiagonal()); }

}  // namespace

TEST(TargetModel, Validation) {
  EXPECT_THROW(TargetModel::static_target(0.0, Vector2(0, 0), MatrixXd::Zero(2, 2)), std::invalid_argument);
  EXPECT_THROW(TargetModel::static_target(-1.0, Vector2(0, 0), MatrixXd::Identity(2, 2)), std::invalid_argument);
  const auto cv = TargetModel::constant_velocity(0.5, 0.1, Eigen::Vector4d::Zero(), MatrixXd::Identity(4, 4));
  EXPECT_EQ(cv.dim(), 4);
  EXPECT_NEAR(cv.A(0, 2), 0.5, 0.0);
  EXPECT_NEAR(cv.W(0, 0), 0.1 * 0.125 / 3.0, 1e-15);
}

TEST(Measurement, JacobiansMatchFiniteDifferences) {
  const auto model = TargetModel::constant_velocity(0.5, 0.01, Eigen::Vector4d(3, 4, 0.2, -0.1),
                                                    MatrixXd::Identity(4, 4));
  const Pose T = Pose::planar(0.5, -0.2, 0.7);
  const double h = 1e-6;
  MatrixXd Hr(1, 4), Hb(2, 4);
  for (int c = 0; c < 4; ++c) {
    VectorXd mp = model.mu0, mm = model.mu0;
    mp[c] += h;
    mm[c] -= h;
    Hr(0, c) = (h_range(T, mp, model.S) - h_range(T, mm, model.S)) / (2 * h);
    Hb.col(c) = (h_bearing(T, mp, model.S) - h_bearing(T, mm, model.S)) / (2 * h);
  }
  EXPECT_LE((H_range(T, model.mu0, model.S) - Hr).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((H_bearing(T, model.mu0, model.S) - Hb).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(h_bearing(T, model.mu0, model.S).norm(), 1.0, 1e-15);
}

TEST(Measurement, PoseDerivativeMatchesFiniteDifferences) {
  const auto model = fixture_model();
  const Pose T = Pose::planar(0.4, 0.3, -0.6);
  const double h = 1e-6;
  for (Sensor s : {Sensor::range, Sensor::bearing}) {
    const MeasurementModel mm{s, 0.1};
    for (int i : {0, 1, 5}) {
      const Matrix4 dT = T.matrix() * dexp_du(1.0, Twist(), i);
      const Pose Tp = compose(T, exp_twist(1.0, Twist(Vector6(Vector6::Unit(i) * h))));
      const Pose Tm = compose(T, exp_twist(1.0, Twist(Vector6(-Vector6::Unit(i) * h))));
      const MatrixXd fd = (H_of(Tp, mm, model) - H_of(Tm, mm, model)) / (2 * h);
      EXPECT_LE((dH_du(T, dT, mm, model) - fd).cwiseAbs().maxCoeff(), 1e-8);
      const MatrixXd fdM = (info_matrix(Tp, mm, model) - info_matrix(Tm, mm, model)) / (2 * h);
      EXPECT_LE((dM_du(T, dT, mm, model) - fdM).cwiseAbs().maxCoeff(), 1e-7);
    }
  }
}

TEST(Measurement, CoincidentRobotAndTargetIsAnError) {
  const auto model = fixture_model();
  EXPECT_THROW(H_range(Pose::planar(3, 4, 0), model.mu0, model.S), std::domain_error);
  EXPECT_THROW(info_matrix(Pose::planar(3, 4, 0), {Sensor::bearing, 0.1}, model), std::domain_error);
}

TEST(Riccati, MatchesTextbookKalmanStep) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g;
  for (int n = 0; n < 20; ++n) {
    const Eigen::Matrix4d B = Eigen::Matrix4d::NullaryExpr([&] { return g(rng); });
    const MatrixXd P = B * B.transpose() + 0.1 * Eigen::Matrix4d::Identity();
    const auto model = TargetModel::constant_velocity(0.5, 0.05, Eigen::Vector4d(2, 3, 0, 0), P);
    const MeasurementModel mm{n % 2 ? Sensor::bearing : Sensor::range, 0.1};
    const Pose T = Pose::planar(0.1 * n, -0.2, 0.3);
    const MatrixXd H = H_of(T, mm, model);
    const MatrixXd V = MatrixXd::Identity(H.rows(), H.rows()) * mm.noise_var;
    const MatrixXd Kg = P * H.transpose() * (H * P * H.transpose() + V).inverse();
    const MatrixXd post = P - Kg * H * P;
    const MatrixXd expected = model.A * post * model.A.transpose() + model.W;
    EXPECT_LE((riccati(P, info_matrix(T, mm, model), model) - expected).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Riccati, SingularCovarianceIsAnError) {
  const auto model = fixture_model();
  EXPECT_THROW(riccati(MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 2), model), std::domain_error);
}

TEST(Sensitivity, RecursionMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  for (int n = 0; n < 10; ++n) {
    const auto [prob, U] = random_tracking_instance(rng, 1 + n % 5, n % 2 ? Sensor::bearing : Sensor::range);
    const auto c = check_tracking_sensitivity(prob, U, 1e-5, 1e-4, 1e-7);
    EXPECT_LE(c.max_error, 1e-4) << n;
  }
}

TEST(Sensitivity, CostGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(43);
  for (int n = 0; n < 10; ++n) {
    const auto [prob, U] = random_tracking_instance(rng, 5, n % 2 ? Sensor::bearing : Sensor::range);
    const auto c = check_tracking_gradient(prob, U, 1e-5, 1e-4, 1e-7);
    EXPECT_LE(c.max_error, 1e-4) << n;
  }
}

TEST(Sensitivity, TerminalWeightsByDefault) {
  const TrackingProblem p{Pose(), fixture_model(), {}, {}};
  EXPECT_EQ(p.stage_weights(3), (std::vector<double>{0, 0, 1}));
  const TrackingProblem q{Pose(), fixture_model(), {}, {1, 2}};
  EXPECT_THROW(q.stage_weights(3), std::invalid_argument);
}

TEST(TrackingGd, ZeroStepKeepsCost) {
  const TrackingProblem p{Pose(), fixture_model(), {}, {}};
  const ControlSequence U(std::vector<Twist>(4, Twist::planar(1, 0, 0.2)), 0.5);
  const auto res = tracking_gd(p, U, Vector6::Zero(), {}, 20);
  for (double c : res.cost_trace) EXPECT_EQ(c, res.cost_trace.front());
}

TEST(TrackingGd, DecreasesCostWithFrozenComponent) {
  const TrackingProblem p{Pose(), fixture_model(), {}, {}};
  const ControlSequence U(std::vector<Twist>(4, Twist::planar(1, 0, 0.2)), 0.5);
  const auto res = tracking_gd(p, U, Vector6::Constant(0.05), {false, true, true, true, true, false}, 50);
  EXPECT_LT(res.cost_trace.back(), res.cost_trace.front());
  EXPECT_EQ(res.u.matrix().col(1), U.matrix().col(1));
}

TEST(CostMap, RangeSymmetryAndMinimumColumn) {
  std::vector<double> xs, ys;
  for (int i = 0; i <= 60; ++i) xs.push_back(0.1 * i);
  for (int i = 0; i <= 80; ++i) ys.push_back(0.1 * i);
  const MatrixXd J = cost_map(xs, ys, {Sensor::range, 0.1}, fixture_model());
  EXPECT_TRUE(std::isnan(J(40, 30)));
  for (int r = 0; r < 81; ++r) {
    if (r == 40) continue;
    Eigen::Index c;
    J.row(r).minCoeff(&c);
    EXPECT_EQ(c, 30) << r;
    for (int d = 1; d <= 30; ++d) EXPECT_NEAR(J(r, 30 - d), J(r, 30 + d), 1e-9);
  }
}

TEST(CostMap, BearingDecreasesTowardTarget) {
  std::vector<double> xs, ys{4.0};
  for (int i = 0; i < 30; ++i) xs.push_back(0.1 * i);
  const MatrixXd J = cost_map(xs, ys, {Sensor::bearing, 0.1}, fixture_model());
  for (int c = 1; c < 30; ++c) EXPECT_LT(J(0, c), J(0, c - 1));
}
