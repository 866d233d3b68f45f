#pragma once

// Pose and twist algebra on SE(2) / SE(3) using homogeneous 4x4 matrices.

#include <Eigen/Core>
#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace icr {

using Vector2 = Eigen::Vector2d;
using Vector3 = Eigen::Vector3d;
using Vector4 = Eigen::Vector4d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix4 = Eigen::Matrix4d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Index of a twist component in the stacked vector u = [v; w].
enum class TwistIndex : int { vx = 0, vy = 1, vz = 2, wx = 3, wy = 4, wz = 5 };

/// Below this |omega * tau| the SE(2) exponential and its derivatives use
/// Taylor series instead of the closed form.
inline constexpr double kSmallAngleSe2 = 1e-4;
/// Below this rotation angle the SE(3) coefficients use Taylor series.
inline constexpr double kSmallAngleSe3 = 1e-2;

/// Body-frame twist: linear velocity v [m/s] and angular velocity w [rad/s].
class Twist {
 public:
  Twist() { u_.setZero(); }
  Twist(const Vector3& v, const Vector3& w) {
    u_ << v, w;
    check();
  }
  explicit Twist(const Vector6& u) : u_(u) { check(); }

  /// Planar twist embedded in se(3): v = (vx, vy, 0), w = (0, 0, omega).
  static Twist planar(double vx, double vy, double omega) {
    Vector6 u;
    u << vx, vy, 0.0, 0.0, 0.0, omega;
    return Twist(u);
  }

  Vector3 v() const { return u_.head<3>(); }
  Vector3 w() const { return u_.tail<3>(); }
  const Vector6& vector() const { return u_; }
  double operator[](int i) const { return u_[i]; }
  double operator[](TwistIndex i) const { return u_[static_cast<int>(i)]; }

  bool is_planar() const { return u_[2] == 0.0 && u_[3] == 0.0 && u_[4] == 0.0; }

 private:
  void check() const {
    if (!u_.allFinite()) throw std::invalid_argument("Twist: non-finite component");
  }
  Vector6 u_;
};

inline Matrix3 skew(const Vector3& a) {
  Matrix3 s;
  s << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
       -a.y(), a.x(), 0.0;
  return s;
}

/// se(3) element as a 4x4 matrix [w^ v; 0 0].
inline Matrix4 hat(const Vector6& u) {
  Matrix4 m = Matrix4::Zero();
  m.topLeftCorner<3, 3>() = skew(u.tail<3>());
  m.topRightCorner<3, 1>() = u.head<3>();
  return m;
}
inline Matrix4 hat(const Twist& u) { return hat(u.vector()); }

inline Vector6 vee(const Matrix4& m) {
  Vector6 u;
  u << m(0, 3), m(1, 3), m(2, 3), m(2, 1), m(0, 2), m(1, 0);
  return u;
}

/// Rigid-body transform stored as a homogeneous matrix.
class Pose {
 public:
  Pose() : T_(Matrix4::Identity()) {}

  /// Validates orthonormality and det(R) = 1 within 1e-9.
  explicit Pose(const Matrix4& T) : T_(T) {
    if (!T.allFinite()) throw std::invalid_argument("Pose: non-finite entry");
    const Matrix3 R = T.topLeftCorner<3, 3>();
    if ((R.transpose() * R - Matrix3::Identity()).norm() > 1e-9 ||
        std::abs(R.determinant() - 1.0) > 1e-9)
      throw std::invalid_argument("Pose: rotation block is not in SO(3)");
    if ((T.bottomRows<1>() - Eigen::RowVector4d(0, 0, 0, 1)).norm() != 0.0)
      throw std::invalid_argument("Pose: bottom row must be (0, 0, 0, 1)");
  }

  static Pose identity() { return Pose(); }

  static Pose planar(double x, double y, double theta) {
    Matrix4 T = Matrix4::Identity();
    const double c = std::cos(theta), s = std::sin(theta);
    T(0, 0) = c;
    T(0, 1) = -s;
    T(1, 0) = s;
    T(1, 1) = c;
    T(0, 3) = x;
    T(1, 3) = y;
    return unchecked(T);
  }

  static Pose translation(const Vector3& p) {
    Matrix4 T = Matrix4::Identity();
    T.topRightCorner<3, 1>() = p;
    return unchecked(T);
  }

  const Matrix4& matrix() const { return T_; }
  Matrix3 rotation() const { return T_.topLeftCorner<3, 3>(); }
  Vector3 position() const { return T_.topRightCorner<3, 1>(); }
  /// Heading about the z axis; meaningful for SE(2)-embedded poses.
  double yaw() const { return std::atan2(T_(1, 0), T_(0, 0)); }

  /// Number of compositions since the rotation was last re-projected.
  std::uint32_t drift_count() const { return drift_count_; }

  static Pose unchecked(const Matrix4& T, std::uint32_t drift_count = 0) {
    Pose p;
    p.T_ = T;
    p.drift_count_ = drift_count;
    return p;
  }

 private:
  Matrix4 T_;
  std::uint32_t drift_count_ = 0;
};

/// Compositions between polar re-projections of the rotation block.
inline constexpr std::uint32_t kReorthonormalizeEvery = 100;

/// Nearest rotation (polar factor) of a 3x3 matrix.
inline Matrix3 project_to_so3(const Matrix3& R) {
  Eigen::JacobiSVD<Matrix3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 U = svd.matrixU();
  const Matrix3 V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) *= -1.0;
  return U * V.transpose();
}

inline Pose compose(const Pose& a, const Pose& b) {
  Matrix4 T = a.matrix() * b.matrix();
  std::uint32_t count = std::max(a.drift_count(), b.drift_count()) + 1;
  if (count >= kReorthonormalizeEvery) {
    T.topLeftCorner<3, 3>() = project_to_so3(T.topLeftCorner<3, 3>());
    count = 0;
  }
  T.row(3) << 0.0, 0.0, 0.0, 1.0;
  return Pose::unchecked(T, count);
}

inline Pose inverse(const Pose& a) {
  Matrix4 T = Matrix4::Identity();
  const Matrix3 Rt = a.rotation().transpose();
  T.topLeftCorner<3, 3>() = Rt;
  T.topRightCorner<3, 1>() = -Rt * a.position();
  return Pose::unchecked(T, a.drift_count());
}

/// Inverse of a homogeneous transform matrix without validation.
inline Matrix4 inverse_matrix(const Matrix4& T) {
  Matrix4 inv = Matrix4::Identity();
  const Matrix3 Rt = T.topLeftCorner<3, 3>().transpose();
  inv.topLeftCorner<3, 3>() = Rt;
  inv.topRightCorner<3, 1>() = -Rt * T.topRightCorner<3, 1>();
  return inv;
}

namespace detail {

// sin(w t) / w and (1 - cos(w t)) / w^2 together with their w-derivatives.
struct Se2Coefficients {
  double a, b, da, db;
};

inline Se2Coefficients se2_coefficients(double tau, double omega) {
  const double th = omega * tau;
  Se2Coefficients c{};
  if (std::abs(th) < kSmallAngleSe2) {
    const double t2 = tau * tau, w2 = omega * omega;
    c.a = tau * (1.0 - th * th / 6.0 + th * th * th * th / 120.0);
    c.b = t2 * (0.5 - th * th / 24.0 + th * th * th * th / 720.0);
    c.da = -omega * t2 * tau / 3.0 + omega * w2 * t2 * t2 * tau / 30.0;
    c.db = -omega * t2 * t2 / 12.0 + omega * w2 * t2 * t2 * t2 / 180.0;
  } else {
    const double s = std::sin(th), co = std::cos(th);
    const double one_minus_cos = 2.0 * std::sin(0.5 * th) * std::sin(0.5 * th);
    c.a = s / omega;
    c.b = one_minus_cos / (omega * omega);
    c.da = (th * co - s) / (omega * omega);
    c.db = (th * s - 2.0 * one_minus_cos) / (omega * omega * omega);
  }
  return c;
}

// Coefficients of the SO(3)/SE(3) series in theta = |phi|.
struct So3Coefficients {
  double a;  // sin(t) / t
  double b;  // (1 - cos t) / t^2
  double c;  // (t - sin t) / t^3
  double d;  // (t^2 + 2 cos t - 2) / (2 t^4)
  double e;  // (2 t - 3 sin t + t cos t) / (2 t^5)
};

inline So3Coefficients so3_coefficients(double theta) {
  So3Coefficients k{};
  const double t2 = theta * theta;
  if (theta < kSmallAngleSe3) {
    const double t4 = t2 * t2, t6 = t4 * t2;
    k.a = 1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0;
    k.b = 0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0;
    k.c = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0;
    k.d = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t6 / 3628800.0;
    k.e = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0 - t6 / 9979200.0;
  } else {
    const double s = std::sin(theta), co = std::cos(theta);
    const double one_minus_cos = 2.0 * std::sin(0.5 * theta) * std::sin(0.5 * theta);
    k.a = s / theta;
    k.b = one_minus_cos / t2;
    k.c = (theta - s) / (t2 * theta);
    k.d = (t2 - 2.0 * one_minus_cos) / (2.0 * t2 * t2);
    k.e = (2.0 * theta - 3.0 * s + theta * co) / (2.0 * t2 * t2 * theta);
  }
  return k;
}

}  // namespace detail

/// Closed-form exponential of tau * u^ for a planar twist.
inline Pose exp_se2(double tau, const Twist& u) {
  if (!u.is_planar()) throw std::invalid_argument("exp_se2: twist is not SE(2)-embedded");
  const auto c = detail::se2_coefficients(tau, u[TwistIndex::wz]);
  const Matrix4 uh = hat(u);
  return Pose::unchecked(Matrix4::Identity() + c.a * uh + c.b * uh * uh);
}

/// Full SE(3) exponential of tau * u^ (Rodrigues rotation, V-matrix translation).
inline Pose exp_se3(double tau, const Twist& u) {
  const Vector3 phi = tau * u.w();
  const Vector3 rho = tau * u.v();
  const auto k = detail::so3_coefficients(phi.norm());
  const Matrix3 P = skew(phi);
  const Matrix3 P2 = P * P;
  Matrix4 T = Matrix4::Identity();
  T.topLeftCorner<3, 3>() = Matrix3::Identity() + k.a * P + k.b * P2;
  T.topRightCorner<3, 1>() = (Matrix3::Identity() + k.b * P + k.c * P2) * rho;
  return Pose::unchecked(T);
}

/// Exponential used by the motion model: closed SE(2) form on planar twists.
inline Pose exp_twist(double tau, const Twist& u) {
  return u.is_planar() ? exp_se2(tau, u) : exp_se3(tau, u);
}

inline Matrix3 left_jacobian_so3(const Vector3& phi) {
  const auto k = detail::so3_coefficients(phi.norm());
  const Matrix3 P = skew(phi);
  return Matrix3::Identity() + k.b * P + k.c * P * P;
}

/// Left Jacobian of SE(3) for xi = [rho; phi].
inline Matrix6 left_jacobian(const Vector6& xi) {
  const Vector3 rho = xi.head<3>();
  const Vector3 phi = xi.tail<3>();
  const auto k = detail::so3_coefficients(phi.norm());
  const Matrix3 P = skew(phi);
  const Matrix3 Rh = skew(rho);
  const Matrix3 P2 = P * P;
  const Matrix3 PRP = P * Rh * P;
  const Matrix3 Q = 0.5 * Rh + k.c * (P * Rh + Rh * P + PRP) +
                    k.d * (P2 * Rh + Rh * P2 - 3.0 * PRP) +
                    k.e * (PRP * P + P * PRP);
  const Matrix3 J = Matrix3::Identity() + k.b * P + k.c * P2;
  Matrix6 JL = Matrix6::Zero();
  JL.topLeftCorner<3, 3>() = J;
  JL.topRightCorner<3, 3>() = Q;
  JL.bottomRightCorner<3, 3>() = J;
  return JL;
}

/// d exp(tau u^) / d u_i = tau (J_L(tau u) e_i)^ exp(tau u^), i in [0, 6).
inline Matrix4 dexp_du(double tau, const Twist& u, int i) {
  if (i < 0 || i >= 6) throw std::out_of_range("dexp_du: component index");
  const Vector6 col = left_jacobian(tau * u.vector()).col(i);
  return tau * hat(col) * exp_twist(tau, u).matrix();
}

/// All six derivatives at once, sharing the Jacobian and exponential.
inline std::array<Matrix4, 6> dexp_du_all(double tau, const Twist& u) {
  const Matrix6 JL = left_jacobian(tau * u.vector());
  const Matrix4 E = exp_twist(tau, u).matrix();
  std::array<Matrix4, 6> out;
  for (int i = 0; i < 6; ++i) out[i] = tau * hat(Vector6(JL.col(i))) * E;
  return out;
}

/// Planar closed forms of d exp(tau u^) / d{vx, vy, omega}.
inline Matrix4 dexp_se2_du(double tau, const Twist& u, TwistIndex which) {
  if (!u.is_planar()) throw std::invalid_argument("dexp_se2_du: twist is not SE(2)-embedded");
  const double w = u[TwistIndex::wz];
  const auto c = detail::se2_coefficients(tau, w);
  const Matrix4 uh = hat(u);
  Matrix4 du = Matrix4::Zero();
  switch (which) {
    case TwistIndex::vx:
      du(0, 3) = 1.0;
      break;
    case TwistIndex::vy:
      du(1, 3) = 1.0;
      break;
    case TwistIndex::wz:
      du(0, 1) = -1.0;
      du(1, 0) = 1.0;
      break;
    default:
      throw std::invalid_argument("dexp_se2_du: only vx, vy and wz are planar components");
  }
  const Matrix4 du2 = du * uh + uh * du;
  Matrix4 out = c.a * du + c.b * du2;
  if (which == TwistIndex::wz) out += c.da * uh + c.db * uh * uh;
  return out;
}

}  // namespace icr
