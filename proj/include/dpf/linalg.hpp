#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "dpf/errors.hpp"

namespace dpf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline bool is_symmetric(const Matrix& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

/// Factor F with F*F^T = cov, from the symmetric eigendecomposition.
/// Eigenvalues in [-neg_tol, 0) are clamped to zero; anything more negative
/// is rejected.
inline Matrix psd_sqrt(const Matrix& cov, double neg_tol = 1e-8) {
  if (cov.rows() != cov.cols()) throw CovarianceError("covariance must be square");
  if (cov.size() == 0) return cov;
  if (!cov.allFinite()) throw CovarianceError("covariance has non-finite entries");
  if (!is_symmetric(cov, 1e-8)) throw CovarianceError("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (cov + cov.transpose()));
  Vector lambda = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -neg_tol)
      throw CovarianceError("covariance has negative eigenvalue " + std::to_string(lambda(i)));
    lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
  }
  return eig.eigenvectors() * lambda.asDiagonal();
}

/// Column mean of a d x N particle matrix.
inline Vector column_mean(const Matrix& particles) { return particles.rowwise().mean(); }

inline Vector weighted_mean(const Matrix& particles, const Vector& weights) {
  return particles * weights;
}

/// Sample covariance of the columns; divisor N-1 (or N when N == 1).
inline Matrix sample_covariance(const Matrix& particles) {
  const auto n = particles.cols();
  const Vector mu = column_mean(particles);
  const Matrix centered = particles.colwise() - mu;
  const double div = n > 1 ? static_cast<double>(n - 1) : 1.0;
  return (centered * centered.transpose()) / div;
}

}  // namespace dpf
