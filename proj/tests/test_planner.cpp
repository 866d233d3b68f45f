#include "icr/gradcheck.hpp"
#include "icr/planner.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace icr;

namespace {

// Y_K accumulated without any culling.
double brute_reward(const PlanningProblem& p, const ControlSequence& U) {
  Pose T = p.start;
  MatrixXd Y = p.prior.to_dense();
  for (const auto& u : U.u) {
    T = compose(T, exp_twist(U.tau, u));
    for (int j = 0; j < p.cells().size(); ++j) Y(j, j) += inv_noise_var(T, p.cells().position(j), p.fov);
  }
  return Information::dense(Y).log_det();
}

}  // namespace

TEST(ControlSequence, MatrixRoundTripAndValidation) {
  const ControlSequence U({Twist::planar(1, 0, 0.1), Twist::planar(1.5, 0.2, -0.3)}, 0.5);
  const ControlSequence V = ControlSequence::from_matrix(U.matrix(), 0.5);
  EXPECT_EQ(V.matrix(), U.matrix());
  EXPECT_THROW(ControlSequence({}, 0.5), std::invalid_argument);
  EXPECT_THROW(ControlSequence({Twist()}, 0.0), std::invalid_argument);
}

TEST(StepPolicy, Validation) {
  StepPolicy p;
  p.backtrack = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = StepPolicy{};
  p.gamma0[2] = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(ForwardPass, RewardMatchesUnculledComputation) {
  std::mt19937_64 rng(31);
  for (int n = 0; n < 10; ++n) {
    const auto inst = random_icr_instance(rng, 3, 8, 0.5, n % 2 == 0, n % 3 == 0);
    EXPECT_NEAR(reward(inst.problem, inst.controls), brute_reward(inst.problem, inst.controls), 1e-10);
  }
}

TEST(PoseSensitivities, MatchFiniteDifferences) {
  std::mt19937_64 rng(32);
  const auto inst = random_icr_instance(rng, 4, 6, 0.5, false, true);
  const auto poses = forward_pass(inst.problem, inst.controls).poses;
  const double h = 1e-6;
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 6; ++i) {
      const auto lambdas = pose_sensitivities(poses, inst.controls, k, i);
      ControlMatrix up = inst.controls.matrix(), dn = up;
      up(k, i) += h;
      dn(k, i) -= h;
      const auto pp = forward_pass(inst.problem, ControlSequence::from_matrix(up, 0.5)).poses;
      const auto pm = forward_pass(inst.problem, ControlSequence::from_matrix(dn, 0.5)).poses;
      for (int s = k + 1; s <= 4; ++s) {
        const Matrix4 fd = (pp[s].matrix() - pm[s].matrix()) / (2 * h);
        EXPECT_LE((lambdas[s - k - 1] - fd).cwiseAbs().maxCoeff(), 1e-7);
      }
    }
}

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(33);
  for (int n = 0; n < 24; ++n) {
    const int K = std::array{1, 2, 3, 5}[n % 4];
    const auto inst = random_icr_instance(rng, K, 8, 0.5, n % 3 == 0, n % 2 == 0);
    const auto c = check_icr_gradient(inst.problem, inst.controls, 1e-5, 1e-4, 1e-7);
    EXPECT_LE(c.max_error, 1e-4) << "instance " << n << " worst (k=" << c.worst_k << ", i=" << c.worst_i << ")";
  }
}

TEST(Gradient, CorruptedDerivativeIsDetected) {
  std::mt19937_64 rng(34);
  const auto inst = random_icr_instance(rng, 3, 8, 0.5, false, false);
  const auto c = check_icr_gradient(inst.problem, inst.controls, 1e-5, 1e-4, 1e-7, corrupted_exp_derivative);
  EXPECT_GT(c.max_error, 1e-2);
  EXPECT_EQ(c.worst_i, 5);
}

TEST(Gradient, ZeroWhenNothingIsInView) {
  const GridGeometry g(4, 4, 0.5);
  const PlanningProblem p{Pose::planar(50, 50, 0), Information::isotropic(16, 1.0), &g, {}};
  const ControlSequence U({Twist::planar(1, 0, 0), Twist::planar(1, 0, 0)}, 0.5);
  EXPECT_EQ(gradient(p, U).cwiseAbs().maxCoeff(), 0.0);
  const auto res = icr_optimize(p, U, StepPolicy{}, 5);
  EXPECT_EQ(res.reward_trace.size(), 1u);
  EXPECT_EQ(res.u_opt.matrix(), U.matrix());
}

TEST(IcrOptimize, TraceNonDecreasingAndFrozenComponentsFixed) {
  std::mt19937_64 rng(35);
  for (int n = 0; n < 10; ++n) {
    auto inst = random_icr_instance(rng, 5, 8, 0.5, false, false);
    StepPolicy policy = StepPolicy::planar();
    policy.frozen[1] = true;
    const auto res = icr_optimize(inst.problem, inst.controls, policy, 10);
    for (std::size_t m = 1; m < res.reward_trace.size(); ++m)
      EXPECT_GE(res.reward_trace[m], res.reward_trace[m - 1]);
    EXPECT_EQ(res.u_opt.matrix().col(1), inst.controls.matrix().col(1));
    EXPECT_EQ(res.u_opt.matrix().col(2), inst.controls.matrix().col(2));
    EXPECT_EQ(res.poses.size(), 5u);
    EXPECT_NEAR(reward(inst.problem, res.u_opt), res.reward_trace.back(), 1e-12);
  }
}

TEST(IcrOptimize, BoxBoundsRespected) {
  std::mt19937_64 rng(36);
  auto inst = random_icr_instance(rng, 3, 8, 0.5, false, false);
  StepPolicy policy;
  policy.gamma0 = Vector6::Constant(10.0);
  policy.max_abs = Vector6::Constant(0.8);
  const auto res = icr_optimize(inst.problem, inst.controls, policy, 5);
  EXPECT_LE(res.u_opt.matrix().cwiseAbs().maxCoeff(), 0.8);
  EXPECT_THROW(icr_optimize(inst.problem, inst.controls, policy, 0), std::invalid_argument);
}

TEST(IcrOptimize, ImprovesHalfExploredMap) {
  const GridGeometry g(20, 20, 0.5);
  VectorXd y = VectorXd::Constant(400, 0.01);
  for (int j = 0; j < 400; ++j)
    if (g.col(j) < 10) y[j] = 5.0;
  const PlanningProblem p{Pose::planar(5.0, 5.0, std::numbers::pi), Information::diagonal(y), &g, {}};
  const ControlSequence U(std::vector<Twist>(5, Twist::planar(1.5, 0, 0)), 0.5);
  const auto res = icr_optimize(p, U, StepPolicy::planar(), 10);
  EXPECT_GT(res.reward_trace.back(), res.reward_trace.front());
}
