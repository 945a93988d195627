#pragma once

// Exact Kalman filter used as the oracle for linear-Gaussian models.

#include <vector>

#include "dpf/linalg.hpp"

namespace testing_kalman {

using dpf::Matrix;
using dpf::Vector;

struct KalmanStep {
  Vector prior_mean;
  Matrix prior_cov;
  Vector mean;
  Matrix cov;
};

inline std::vector<KalmanStep> kalman(const Matrix& F, const Matrix& H, const Matrix& Q, const Matrix& R,
                                      Vector m, Matrix P, const std::vector<Vector>& ys) {
  std::vector<KalmanStep> out;
  for (const auto& y : ys) {
    KalmanStep s;
    s.prior_mean = F * m;
    s.prior_cov = F * P * F.transpose() + Q;
    const Matrix S = H * s.prior_cov * H.transpose() + R;
    const Matrix K = s.prior_cov * H.transpose() * S.inverse();
    m = s.prior_mean + K * (y - H * s.prior_mean);
    P = (Matrix::Identity(m.size(), m.size()) - K * H) * s.prior_cov;
    s.mean = m;
    s.cov = P;
    out.push_back(s);
  }
  return out;
}

}  // namespace testing_kalman
