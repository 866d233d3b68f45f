#pragma once

// Differentiable field of view: signed distance to a planar cone (an
// isosceles triangle with its apex at the sensor), probit smoothing and the
// resulting per-cell inverse noise variance.

#include "icr/liegroup.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string_view>

namespace icr {

/// Cone field of view in the robot body frame, apex at the origin, axis +x.
struct ConeFov {
  double height = 3.0;                          // apex-to-base distance [m]
  double half_angle = std::numbers::pi / 6.0;   // psi [rad]
  double sigma = 1.0;                           // in-view noise std dev
  double kappa = 0.5;                           // probit smoothing

  void validate() const {
    if (!(height > 0.0)) throw std::invalid_argument("ConeFov: height must be positive");
    if (!(half_angle > 0.0 && half_angle < std::numbers::pi / 2.0))
      throw std::invalid_argument("ConeFov: half angle must lie in (0, pi/2)");
    if (!(sigma > 0.0)) throw std::invalid_argument("ConeFov: sigma must be positive");
    if (!(kappa > 0.0)) throw std::invalid_argument("ConeFov: kappa must be positive");
  }

  /// Largest distance from the apex to any point of the triangle.
  double reach() const { return height / std::cos(half_angle); }
};

/// Closest-feature regions of the projected cone: D1..D3 are the upper leg,
/// lower leg and base; P1..P3 the upper corner, lower corner and apex.
enum class Region { D1, D2, D3, P1, P2, P3 };

inline std::string_view to_string(Region r) {
  switch (r) {
    case Region::D1: return "D1";
    case Region::D2: return "D2";
    case Region::D3: return "D3";
    case Region::P1: return "P1";
    case Region::P2: return "P2";
    case Region::P3: return "P3";
  }
  return "?";
}

struct SdfEval {
  double d = 0.0;
  Vector2 grad = Vector2::Zero();
  Region region = Region::D1;
};

/// q = Q T^-1 [p; 1]: the cell position in the robot body frame.
inline Vector3 body_frame(const Pose& T, const Vector3& p) {
  return T.rotation().transpose() * (p - T.position());
}

/// Precomputed signed distance function of the projected cone. The plane is
/// split into closest-feature regions by the curves lower(x) and upper(x)
/// (mirrored for negative y); the regions are closed and the first match in
/// the order D1, D2, D3, P1, P2, P3 wins.
class ConeSdf {
 public:
  explicit ConeSdf(const ConeFov& fov) {
    fov.validate();
    const double psi = fov.half_angle;
    h_ = fov.height;
    cot_psi_ = 1.0 / std::tan(psi);
    p_star_ = h_ / (1.0 + std::sin(psi));
    bisector_slope_ = std::tan(std::numbers::pi / 4.0 + psi / 2.0);
    base_offset_ = h_ / std::cos(psi);
    corner_y_ = h_ * std::tan(psi);
    a1_ = Vector2(-std::sin(psi), std::cos(psi));
    a2_ = Vector2(-std::sin(psi), -std::cos(psi));
  }

  double lower(double x) const {
    if (x <= 0.0) return -cot_psi_ * x;
    if (x <= p_star_) return 0.0;
    if (x <= h_) return bisector_slope_ * x - base_offset_;
    return corner_y_;
  }

  double upper(double x) const {
    if (x <= h_) return -(x - h_) * cot_psi_ + corner_y_;
    return corner_y_;
  }

  Region classify(const Vector2& q) const {
    const double x = q.x(), y = q.y();
    const double lo = lower(x), up = upper(x);
    if (x <= h_ && y >= lo && y <= up) return Region::D1;
    if (x <= h_ && y <= -lo && y >= -up) return Region::D2;
    if (x >= p_star_ && std::abs(y) <= lo) return Region::D3;
    if (y > up) return Region::P1;
    if (y < -up) return Region::P2;
    return Region::P3;
  }

  /// Edge point q_i of a corner region.
  Vector2 corner(Region r) const {
    switch (r) {
      case Region::P1: return {h_, corner_y_};
      case Region::P2: return {h_, -corner_y_};
      default: return Vector2::Zero();
    }
  }

  SdfEval operator()(const Vector2& q) const {
    SdfEval out;
    out.region = classify(q);
    for (Region r : {Region::P1, Region::P2, Region::P3})
      if (q == corner(r)) return out;  // zero subgradient at the corner points
    switch (out.region) {
      case Region::D1:
        out.d = a1_.dot(q);
        out.grad = a1_;
        break;
      case Region::D2:
        out.d = a2_.dot(q);
        out.grad = a2_;
        break;
      case Region::D3:
        out.d = q.x() - h_;
        out.grad = Vector2(1.0, 0.0);
        break;
      case Region::P1:
      case Region::P2:
      case Region::P3: {
        const Vector2 diff = q - corner(out.region);
        out.d = diff.norm();
        out.grad = diff / out.d;
        break;
      }
    }
    return out;
  }

 private:
  double h_, cot_psi_, p_star_, bisector_slope_, base_offset_, corner_y_;
  Vector2 a1_, a2_;
};

inline Region classify_region(const Vector2& q, const ConeFov& fov) { return ConeSdf(fov).classify(q); }

/// Signed distance to the projected cone (negative inside) and its gradient.
inline SdfEval sdf_cone2d(const Vector2& q, const ConeFov& fov) { return ConeSdf(fov)(q); }

inline Vector2 sdf_grad(const Vector2& q, const ConeFov& fov) { return sdf_cone2d(q, fov).grad; }

/// Shifted Gaussian CDF: 0.5 * (1 + erf(x / (sqrt(2) kappa) - 2)).
inline double probit(double x, double kappa) {
  return 0.5 * std::erfc(-(x / (std::numbers::sqrt2 * kappa) - 2.0));
}

/// 1 - probit(x), computed without cancellation.
inline double probit_complement(double x, double kappa) {
  return 0.5 * std::erfc(x / (std::numbers::sqrt2 * kappa) - 2.0);
}

inline double probit_deriv(double x, double kappa) {
  const double z = x / (std::numbers::sqrt2 * kappa) - 2.0;
  return std::exp(-z * z) / (std::sqrt(2.0 * std::numbers::pi) * kappa);
}

/// Smoothed inverse noise variance (1 - Phi(d)) / sigma^2 of the cell at p.
inline double inv_noise_var(const Pose& T, const Vector3& p, const ConeFov& fov) {
  const Vector3 q = body_frame(T, p);
  const double d = sdf_cone2d(q.head<2>(), fov).d;
  return probit_complement(d, fov.kappa) / (fov.sigma * fov.sigma);
}

/// Signed distance beyond which 1 - Phi(d) < 1e-19 and kappa * Phi'(d) < 1e-18.
/// Cells farther outside the cone are skipped by the planner and the mapper.
inline double negligible_distance(const ConeFov& fov) {
  return (2.0 + 6.5) * std::numbers::sqrt2 * fov.kappa;
}

}  // namespace icr
