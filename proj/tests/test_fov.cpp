#include "icr/fov.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <vector>

using namespace icr;

namespace {

struct Triangle {
  Vector2 apex{0, 0}, q1, q2;
  explicit Triangle(const ConeFov& f)
      : q1(f.height, f.height * std::tan(f.half_angle)), q2(f.height, -f.height * std::tan(f.half_angle)) {}

  // Half-plane membership for the counter-clockwise triangle apex, q2, q1.
  bool contains(const Vector2& p) const {
    auto cross = [](const Vector2& a, const Vector2& b, const Vector2& c) {
      return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
    };
    return cross(apex, q2, p) > 0 && cross(q2, q1, p) > 0 && cross(q1, apex, p) > 0;
  }

  std::vector<Vector2> boundary(int n) const {
    const Vector2 v[3] = {apex, q2, q1};
    double len[3], total = 0;
    for (int e = 0; e < 3; ++e) total += len[e] = (v[(e + 1) % 3] - v[e]).norm();
    std::vector<Vector2> pts;
    for (int e = 0; e < 3; ++e) {
      const int m = static_cast<int>(std::round(n * len[e] / total));
      for (int i = 0; i < m; ++i) pts.push_back(v[e] + (v[(e + 1) % 3] - v[e]) * (i / double(m)));
    }
    return pts;
  }
};

}  // namespace

TEST(ConeFov, Validation) {
  ConeFov f;
  EXPECT_NO_THROW(f.validate());
  f.half_angle = std::numbers::pi / 2;
  EXPECT_THROW(f.validate(), std::invalid_argument);
  f = ConeFov{};
  f.kappa = 0;
  EXPECT_THROW(f.validate(), std::invalid_argument);
  f = ConeFov{};
  f.height = -1;
  EXPECT_THROW(ConeSdf{f}, std::invalid_argument);
}

TEST(ConeSdf, MatchesBoundarySampling) {
  const ConeFov fov;
  const ConeSdf sdf(fov);
  const Triangle tri(fov);
  const auto boundary = tri.boundary(10000);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> x(-3, 6), y(-4, 4);
  double worst = 0;
  for (int n = 0; n < 500; ++n) {
    const Vector2 q(x(rng), y(rng));
    double dmin = INFINITY;
    for (const auto& b : boundary) dmin = std::min(dmin, (q - b).norm());
    const double oracle = tri.contains(q) ? -dmin : dmin;
    worst = std::max(worst, std::abs(sdf(q).d - oracle));
  }
  EXPECT_LE(worst, 2e-3);
}

TEST(ConeSdf, SignAgreesWithMembership) {
  const ConeFov fov;
  const ConeSdf sdf(fov);
  const Triangle tri(fov);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> x(-1, 4), y(-2.5, 2.5);
  int violations = 0;
  for (int n = 0; n < 100000; ++n) {
    const Vector2 q(x(rng), y(rng));
    if ((sdf(q).d < 0) != tri.contains(q)) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(ConeSdf, RegionsOfRepresentativePoints) {
  const ConeFov fov;
  const ConeSdf sdf(fov);
  EXPECT_EQ(sdf.classify({1.0, 2.0}), Region::D1);
  EXPECT_EQ(sdf.classify({1.0, -2.0}), Region::D2);
  EXPECT_EQ(sdf.classify({4.0, 0.0}), Region::D3);
  EXPECT_EQ(sdf.classify({2.9, 0.1}), Region::D3);
  EXPECT_EQ(sdf.classify({4.0, 3.0}), Region::P1);
  EXPECT_EQ(sdf.classify({4.0, -3.0}), Region::P2);
  EXPECT_EQ(sdf.classify({-1.0, 0.0}), Region::P3);
  EXPECT_EQ(to_string(Region::P2), "P2");
}

TEST(ConeSdf, ValuesAtKnownPoints) {
  const ConeFov fov;
  const ConeSdf sdf(fov);
  EXPECT_NEAR(sdf({4.0, 0.0}).d, 1.0, 1e-15);
  EXPECT_NEAR(sdf({-2.0, 0.0}).d, 2.0, 1e-15);
  // Incircle center of the triangle is at distance -r from every side.
  const double a = 2 * fov.reach(), b = 2 * fov.height * std::tan(fov.half_angle);
  const double r = fov.height * b / (a + b);
  EXPECT_NEAR(sdf({fov.height - r, 0.0}).d, -r, 1e-12);
}

TEST(ConeSdf, CornerPoints) {
  const ConeFov fov;
  const ConeSdf sdf(fov);
  for (Region r : {Region::P1, Region::P2, Region::P3}) {
    const auto e = sdf(sdf.corner(r));
    EXPECT_EQ(e.d, 0.0);
    EXPECT_EQ(e.grad, Vector2::Zero());
  }
  // the corner itself belongs to the adjacent edge region
  EXPECT_EQ(sdf.classify({-1e-9, 0.0}), Region::P3);
  EXPECT_EQ(sdf.classify({0.0, 0.0}), Region::D1);
}

TEST(ConeSdf, ContinuousAcrossRegionBoundaries) {
  const ConeFov fov;
  const ConeSdf sdf(fov);
  const double eps = 1e-10;
  for (double x = -3.0; x <= 6.0; x += 0.01) {
    for (double y : {sdf.lower(x), sdf.upper(x), -sdf.lower(x), -sdf.upper(x)}) {
      const double d0 = sdf({x, y - eps}).d, d1 = sdf({x, y + eps}).d;
      EXPECT_NEAR(d0, d1, 1e-8) << x << ' ' << y;
    }
  }
}

TEST(ConeSdf, GradientMatchesFiniteDifferences) {
  const ConeFov fov;
  const ConeSdf sdf(fov);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> x(-2, 5), y(-3, 3);
  const double h = 1e-6;
  int checked = 0;
  for (int n = 0; n < 2000; ++n) {
    const Vector2 q(x(rng), y(rng));
    const Region r = sdf.classify(q);
    bool same = true;
    for (const Vector2& s : {Vector2(h, 0), Vector2(-h, 0), Vector2(0, h), Vector2(0, -h)})
      same = same && sdf.classify(q + s) == r;
    if (!same) continue;
    const Vector2 fd((sdf(q + Vector2(h, 0)).d - sdf(q - Vector2(h, 0)).d) / (2 * h),
                     (sdf(q + Vector2(0, h)).d - sdf(q - Vector2(0, h)).d) / (2 * h));
    EXPECT_LE((sdf(q).grad - fd).norm(), 1e-6);
    EXPECT_NEAR(sdf(q).grad.norm(), 1.0, 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 1900);
}

TEST(ConeSdf, BodyFrameTransform) {
  const Pose T = Pose::planar(1.0, 2.0, std::numbers::pi / 2);
  const Vector3 q = body_frame(T, Vector3(1.0, 4.0, 0.0));
  EXPECT_NEAR(q.x(), 2.0, 1e-15);
  EXPECT_NEAR(q.y(), 0.0, 1e-15);
}

TEST(Probit, AnchorValue) { EXPECT_NEAR(probit(0.0, 0.5), 0.00234, 1e-5); }

TEST(Probit, Monotone) {
  double prev = -1;
  for (int i = 0; i < 10000; ++i) {
    const double p = probit(-5.0 + 10.0 * i / 9999.0, 0.5);
    EXPECT_GE(p, prev);
    prev = p;
  }
}

TEST(Probit, HeavisideLimit) {
  EXPECT_GT(probit(0.5, 1e-3), 1 - 1e-12);
  EXPECT_LT(probit(-0.5, 1e-3), 1e-12);
}

TEST(Probit, ComplementAndDerivative) {
  for (double x = -3; x <= 3; x += 0.25) {
    EXPECT_NEAR(probit(x, 0.5) + probit_complement(x, 0.5), 1.0, 1e-15);
    const double h = 1e-6;
    EXPECT_NEAR(probit_deriv(x, 0.5), (probit(x + h, 0.5) - probit(x - h, 0.5)) / (2 * h), 1e-8);
  }
}

TEST(Probit, NegligibleDistance) {
  const ConeFov fov;
  const double d = negligible_distance(fov);
  EXPECT_LT(probit_complement(d, fov.kappa), 1e-19);
  EXPECT_LT(probit_deriv(d, fov.kappa), 1e-18);
}

TEST(InvNoiseVar, InsideAndOutside) {
  ConeFov fov;
  fov.sigma = 2.0;
  fov.kappa = 1e-3;
  const Pose T = Pose::planar(0, 0, 0);
  EXPECT_NEAR(inv_noise_var(T, Vector3(2, 0, 0), fov), 0.25, 1e-15);
  EXPECT_LT(inv_noise_var(T, Vector3(-1, 0, 0), fov), 1e-300);
}
