#pragma once

// Synthetic models used by the CLI presets, the demos and the tests.

#include <cmath>

#include "dpf/model.hpp"

namespace dpf::models {

/// x_{t+1} = theta x_t + w, y_t = x_t + v.
inline ModelSpec scalar_ar1(double q = 1.0, double r = 0.01, double theta_max = 1.5) {
  ModelSpec m;
  m.name = "synthetic_scalar";
  m.n_x = m.n_theta = m.n_y = 1;
  m.transition = [](std::size_t, const Vector& x, const Vector& th, const Vector& w) {
    return Vector(th.cwiseProduct(x) + w);
  };
  m.output = [](const Vector& x, const Vector&) { return x; };
  m.output_jacobian = [](const Vector&, const Vector&) { return Matrix::Zero(1, 1); };
  m.process_noise_cov = Matrix::Constant(1, 1, q);
  m.measurement_noise_cov = Matrix::Constant(1, 1, r);
  m.param_domain = {Vector::Zero(1), Vector::Constant(1, theta_max)};
  return m;
}

/// Two-state linear-Gaussian system with full observation; the parameter is
/// a dummy that nothing reads.
inline ModelSpec linear_gaussian_2d() {
  Matrix F(2, 2);
  F << 0.9, 0.2, -0.1, 0.8;
  ModelSpec m;
  m.name = "linear_gaussian";
  m.n_x = 2;
  m.n_theta = 1;
  m.n_y = 2;
  m.transition = [F](std::size_t, const Vector& x, const Vector&, const Vector& w) { return Vector(F * x + w); };
  m.output = [](const Vector& x, const Vector&) { return x; };
  m.process_noise_cov = 0.2 * Matrix::Identity(2, 2);
  m.measurement_noise_cov = 0.5 * Matrix::Identity(2, 2);
  m.param_domain = {Vector::Zero(1), Vector::Constant(1, 2.0)};
  return m;
}

inline Matrix linear_gaussian_2d_transition() {
  Matrix F(2, 2);
  F << 0.9, 0.2, -0.1, 0.8;
  return F;
}

struct Health4Options {
  double process_std = 0.01;
  double measurement_std = 0.01;
  double theta_lower = 1e-6;
  double theta_upper = 1.2;
};

/// Four-state plant with four multiplicative health parameters and five
/// sensors. Each state relaxes toward a periodically excited set point; the
/// first four sensors are health-weighted states with light cross-coupling,
/// the fifth is the unweighted state sum.
inline ModelSpec health4(const Health4Options& o = {}) {
  ModelSpec m;
  m.name = "synthetic_health4";
  m.n_x = 4;
  m.n_theta = 4;
  m.n_y = 5;
  m.transition = [](std::size_t step, const Vector& x, const Vector& th, const Vector& w) {
    Vector next(4);
    const double t = static_cast<double>(step);
    for (int i = 0; i < 4; ++i) {
      const double u = 1.0 + 0.3 * std::sin(0.05 * t + 1.3 * i);
      next(i) = 0.9 * x(i) + 0.1 * th(i) * u;
    }
    return Vector(next + w);
  };
  m.output = [](const Vector& x, const Vector& th) {
    Vector y(5);
    for (int i = 0; i < 4; ++i) y(i) = th(i) * x(i) + 0.2 * x((i + 1) % 4);
    y(4) = x.sum();
    return y;
  };
  m.output_jacobian = [](const Vector& x, const Vector&) {
    Matrix j = Matrix::Zero(5, 4);
    for (int i = 0; i < 4; ++i) j(i, i) = x(i);
    return j;
  };
  m.process_noise_cov = Matrix::Identity(4, 4) * o.process_std * o.process_std;
  m.measurement_noise_cov = Matrix::Identity(5, 5) * o.measurement_std * o.measurement_std;
  m.param_domain = {Vector::Constant(4, o.theta_lower), Vector::Constant(4, o.theta_upper)};
  return m;
}

}  // namespace dpf::models
