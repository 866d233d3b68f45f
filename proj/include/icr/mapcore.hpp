#pragma once

// Occupancy grid and Gaussian map belief. The measurement function observes
// each cell directly, h(T, m) = m, so H = I and the field of view enters only
// through the diagonal noise V(T); every information increment is diagonal.

#include "icr/fov.hpp"
#include "icr/liegroup.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace icr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr std::int8_t kFree = -1;
inline constexpr std::int8_t kOccupied = 1;

/// Cell layout of a row-major grid; cell j sits at row j / width, column
/// j % width with center origin + resolution * (col + 1/2, row + 1/2).
class GridGeometry {
 public:
  GridGeometry() = default;
  GridGeometry(int width, int height, double resolution, Vector2 origin = Vector2::Zero())
      : width_(width), height_(height), resolution_(resolution), origin_(std::move(origin)) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("GridGeometry: empty grid");
    if (!(resolution > 0.0)) throw std::invalid_argument("GridGeometry: resolution must be positive");
    positions_.reserve(static_cast<std::size_t>(width) * height);
    for (int row = 0; row < height; ++row)
      for (int col = 0; col < width; ++col)
        positions_.emplace_back(origin_.x() + resolution * (col + 0.5),
                                origin_.y() + resolution * (row + 0.5), 0.0);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  const Vector2& origin() const { return origin_; }
  int size() const { return width_ * height_; }
  int index(int row, int col) const { return row * width_ + col; }
  int row(int j) const { return j / width_; }
  int col(int j) const { return j % width_; }
  const Vector3& position(int j) const { return positions_[static_cast<std::size_t>(j)]; }
  const std::vector<Vector3>& positions() const { return positions_; }

  Vector2 extent_min() const { return origin_; }
  Vector2 extent_max() const { return origin_ + resolution_ * Vector2(width_, height_); }
  Vector2 center() const { return 0.5 * (extent_min() + extent_max()); }

 private:
  int width_ = 0;
  int height_ = 0;
  double resolution_ = 1.0;
  Vector2 origin_ = Vector2::Zero();
  std::vector<Vector3> positions_;
};

/// Ground-truth occupancy labels over a grid.
struct GridMap {
  GridGeometry geometry;
  std::vector<std::int8_t> cells;  // kFree or kOccupied, row-major

  GridMap() = default;
  GridMap(GridGeometry g, std::vector<std::int8_t> c) : geometry(std::move(g)), cells(std::move(c)) {
    if (static_cast<int>(cells.size()) != geometry.size())
      throw std::invalid_argument("GridMap: label count does not match the grid");
    for (auto v : cells)
      if (v != kFree && v != kOccupied) throw std::invalid_argument("GridMap: labels must be -1 or +1");
  }
  int size() const { return geometry.size(); }
};

/// Information matrix Y, either diagonal or dense symmetric positive definite.
class Information {
 public:
  Information() = default;

  static Information diagonal(VectorXd y) {
    for (Eigen::Index j = 0; j < y.size(); ++j)
      if (!(y[j] > 0.0) || !std::isfinite(y[j]))
        throw std::invalid_argument("Information: diagonal entries must be positive");
    Information info;
    info.diag_ = std::move(y);
    return info;
  }

  static Information dense(MatrixXd Y) {
    if (Y.rows() != Y.cols()) throw std::invalid_argument("Information: matrix must be square");
    if ((Y - Y.transpose()).cwiseAbs().maxCoeff() > 1e-9)
      throw std::invalid_argument("Information: matrix must be symmetric");
    if (Eigen::LLT<MatrixXd>(Y).info() != Eigen::Success)
      throw std::invalid_argument("Information: matrix must be positive definite");
    Information info;
    info.diag_ = Y.diagonal();
    info.dense_ = std::move(Y);
    return info;
  }

  /// Prior Sigma0^-1 for Sigma0 = variance * I.
  static Information isotropic(int n, double variance, bool dense_mode = false) {
    if (!(variance > 0.0)) throw std::invalid_argument("Information: prior variance must be positive");
    if (dense_mode) return dense(MatrixXd::Identity(n, n) / variance);
    return diagonal(VectorXd::Constant(n, 1.0 / variance));
  }

  bool is_dense() const { return dense_.has_value(); }
  Eigen::Index size() const { return diag_.size(); }
  const VectorXd& diagonal() const { return diag_; }

  MatrixXd to_dense() const {
    if (dense_) return *dense_;
    return diag_.asDiagonal();
  }

  /// Y <- Y + diag(m) with m >= 0.
  void add_diagonal(const VectorXd& m) {
    if (m.size() != size()) throw std::invalid_argument("Information: size mismatch");
    diag_ += m;
    if (dense_) dense_->diagonal() += m;
  }

  double log_det() const {
    if (!dense_) return diag_.array().log().sum();
    const Eigen::LLT<MatrixXd> llt(*dense_);
    if (llt.info() != Eigen::Success)
      throw std::domain_error("log_det: information matrix is not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }

  /// Diagonal of Y^-1.
  VectorXd inverse_diagonal() const {
    if (!dense_) return diag_.cwiseInverse();
    const Eigen::LLT<MatrixXd> llt(*dense_);
    if (llt.info() != Eigen::Success)
      throw std::domain_error("inverse_diagonal: information matrix is singular");
    return llt.solve(MatrixXd::Identity(size(), size())).diagonal();
  }

  /// Y^-1 b.
  VectorXd solve(const VectorXd& b) const {
    if (!dense_) return b.cwiseQuotient(diag_);
    const Eigen::LLT<MatrixXd> llt(*dense_);
    if (llt.info() != Eigen::Success) throw std::domain_error("solve: information matrix is singular");
    return llt.solve(b);
  }

  /// Y b.
  VectorXd multiply(const VectorXd& b) const {
    if (!dense_) return diag_.cwiseProduct(b);
    return *dense_ * b;
  }

 private:
  VectorXd diag_;
  std::optional<MatrixXd> dense_;
};

/// Gaussian map belief N(mu, Y^-1); the information mean xi = Y mu is
/// materialized only inside the update.
struct MapBelief {
  VectorXd mu;
  Information info;

  static MapBelief prior(int n, double variance, bool dense_mode = false) {
    return {VectorXd::Zero(n), Information::isotropic(n, variance, dense_mode)};
  }
  Eigen::Index size() const { return mu.size(); }
};

/// Per-step observation: z holds +-1 inside the field of view and the prior
/// mean elsewhere.
struct Measurement {
  VectorXd z;
  std::vector<std::uint8_t> mask;  // 1 = inside the field of view
};

/// Diagonal of M(T) = H^T V^-1 H = V^-1(T): the smoothed inverse noise
/// variance of every cell.
inline VectorXd info_contribution(const Pose& T, const GridGeometry& grid, const ConeFov& fov) {
  const ConeSdf sdf(fov);
  const Matrix3 Rt = T.rotation().transpose();
  const Vector3 t = T.position();
  const double cutoff = fov.reach() + negligible_distance(fov);
  const double inv_var = 1.0 / (fov.sigma * fov.sigma);
  VectorXd m = VectorXd::Zero(grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    const Vector3 q = Rt * (grid.position(j) - t);
    if (q.head<2>().squaredNorm() > cutoff * cutoff) continue;
    m[j] = probit_complement(sdf(q.head<2>()).d, fov.kappa) * inv_var;
  }
  return m;
}

/// Information-form update with H = I: Y' = Y + M, xi' = xi + M z.
inline MapBelief eif_update(const MapBelief& belief, const VectorXd& M, const Measurement& meas) {
  const auto n = belief.size();
  if (M.size() != n || meas.z.size() != n) throw std::invalid_argument("eif_update: dimension mismatch");
  if ((M.array() < 0.0).any()) throw std::invalid_argument("eif_update: information increment must be >= 0");
  const VectorXd xi = belief.info.multiply(belief.mu) + M.cwiseProduct(meas.z);
  MapBelief out{VectorXd(), belief.info};
  out.info.add_diagonal(M);
  out.mu = out.info.solve(xi);
  return out;
}

/// Covariance-form update with H = I and diagonal noise V (entries may be
/// +inf for unobserved cells). Returns the posterior (mean, covariance).
inline std::pair<VectorXd, MatrixXd> ekf_update(const VectorXd& mu, const MatrixXd& Sigma,
                                                const Measurement& meas, const VectorXd& V) {
  const auto n = mu.size();
  if (Sigma.rows() != n || Sigma.cols() != n || meas.z.size() != n || V.size() != n)
    throw std::invalid_argument("ekf_update: dimension mismatch");
  if (Eigen::LLT<MatrixXd>(Sigma).info() != Eigen::Success ||
      (Sigma - Sigma.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::domain_error("ekf_update: covariance is not symmetric positive definite");
  if ((V.array() <= 0.0).any()) throw std::invalid_argument("ekf_update: noise variances must be positive");
  // Gain K = Sigma (Sigma + V)^-1 written through s = V^-1/2 so infinite
  // variances are exact zeros: (Sigma + V)^-1 = S (S Sigma S + I)^-1 S.
  const VectorXd s = V.cwiseInverse().cwiseSqrt();
  MatrixXd innovation = s.asDiagonal() * Sigma * s.asDiagonal();
  innovation.diagonal().array() += 1.0;
  const Eigen::LLT<MatrixXd> llt(innovation);
  const MatrixXd K = Sigma * s.asDiagonal() * llt.solve(MatrixXd(s.asDiagonal()));
  const VectorXd mu_post = mu + K * (meas.z - mu);
  MatrixXd Sigma_post = Sigma - K * Sigma;
  Sigma_post = 0.5 * (Sigma_post + Sigma_post.transpose()).eval();
  return {mu_post, Sigma_post};
}

/// Noiseless observation of the ground truth: cells strictly inside the cone
/// report their label, all others carry the prior mean.
inline Measurement sample_measurement(const GridMap& truth, const Pose& T, const ConeFov& fov,
                                      const VectorXd& prior_mu) {
  const int n = truth.size();
  if (prior_mu.size() != n) throw std::invalid_argument("sample_measurement: dimension mismatch");
  const ConeSdf sdf(fov);
  Measurement meas{prior_mu, std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0)};
  for (int j = 0; j < n; ++j) {
    const Vector3 q = body_frame(T, truth.geometry.position(j));
    if (sdf(q.head<2>()).d < 0.0) {
      meas.mask[static_cast<std::size_t>(j)] = 1;
      meas.z[j] = truth.cells[static_cast<std::size_t>(j)];
    }
  }
  return meas;
}

/// Terminal reward log det Y.
inline double log_det_info(const MapBelief& belief) { return belief.info.log_det(); }

/// g(x) = +1 for x > 0, -1 otherwise (an unknown cell renders as free).
inline std::vector<std::int8_t> threshold_map(const VectorXd& mu) {
  std::vector<std::int8_t> out(static_cast<std::size_t>(mu.size()));
  for (Eigen::Index j = 0; j < mu.size(); ++j) out[static_cast<std::size_t>(j)] = mu[j] > 0.0 ? kOccupied : kFree;
  return out;
}

}  // namespace icr
