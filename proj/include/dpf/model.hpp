#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "dpf/csv.hpp"
#include "dpf/errors.hpp"
#include "dpf/linalg.hpp"
#include "dpf/random.hpp"

namespace dpf {

/// Axis-aligned admissible box for the parameter vector.
struct ParamDomain {
  Vector lower;
  Vector upper;

  bool contains(const Vector& theta) const {
    return theta.size() == lower.size() && (theta.array() >= lower.array()).all() &&
           (theta.array() <= upper.array()).all();
  }
  Vector clamp(const Vector& theta) const { return theta.cwiseMax(lower).cwiseMin(upper); }
  Eigen::Index dim() const { return lower.size(); }
};

// x_{t+1} = f(step, x_t, theta_eff, omega_t)
using TransitionFn =
    std::function<Vector(std::size_t step, const Vector& x, const Vector& theta_eff, const Vector& noise)>;
// y_t = h(x_t, theta_eff) (noise-free part)
using OutputFn = std::function<Vector(const Vector& x, const Vector& theta_eff)>;
using HealthMapFn = std::function<Vector(const Vector& x)>;
// d h(x, theta .* lambda(x)) / d theta, n_y x n_theta, w.r.t. the raw parameter.
using OutputJacobianFn = std::function<Matrix(const Vector& x, const Vector& theta)>;

/// Discrete-time nonlinear stochastic system with a multiplicative
/// parameter vector. The effective parameter handed to f and h is
/// theta .* lambda(x); an empty health map means lambda == 1.
struct ModelSpec {
  std::string name;
  Eigen::Index n_x = 0;
  Eigen::Index n_theta = 0;
  Eigen::Index n_y = 0;
  TransitionFn transition;
  OutputFn output;
  HealthMapFn health_map;
  OutputJacobianFn output_jacobian;
  Matrix process_noise_cov;
  Matrix measurement_noise_cov;
  ParamDomain param_domain;

  Vector effective(const Vector& theta, const Vector& x) const {
    if (!health_map) return theta;
    const Vector lambda = health_map(x);
    if (lambda.size() != n_theta) throw ConfigError("health map returned wrong dimension");
    return theta.cwiseProduct(lambda);
  }

  Vector propagate(std::size_t step, const Vector& x, const Vector& theta, const Vector& noise) const {
    return transition(step, x, effective(theta, x), noise);
  }

  Vector observe(const Vector& x, const Vector& theta) const { return output(x, effective(theta, x)); }

  /// Structural checks. With `for_filtering` the measurement covariance must
  /// also be strictly positive definite.
  void validate(bool for_filtering = true) const {
    if (n_x <= 0 || n_theta <= 0 || n_y <= 0) throw ConfigError(name + ": dimensions must be positive");
    if (!transition || !output) throw ConfigError(name + ": transition and output are required");
    if (process_noise_cov.rows() != n_x || process_noise_cov.cols() != n_x)
      throw ConfigError(name + ": process noise covariance must be n_x x n_x");
    if (measurement_noise_cov.rows() != n_y || measurement_noise_cov.cols() != n_y)
      throw ConfigError(name + ": measurement noise covariance must be n_y x n_y");
    if (!is_symmetric(process_noise_cov) || !is_symmetric(measurement_noise_cov))
      throw CovarianceError(name + ": noise covariances must be symmetric");
    psd_sqrt(process_noise_cov);
    if (for_filtering) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(measurement_noise_cov);
      if (eig.eigenvalues().minCoeff() <= 0.0)
        throw CovarianceError(name + ": measurement noise covariance must be positive definite");
    }
    if (param_domain.lower.size() != n_theta || param_domain.upper.size() != n_theta)
      throw ConfigError(name + ": parameter domain must have n_theta bounds");
    if (!(param_domain.lower.array() < param_domain.upper.array()).all())
      throw ConfigError(name + ": parameter domain requires lower < upper");
  }
};

/// Truth trajectory: states x_0..x_T, outputs y_1..y_T and the parameter
/// active at each step (thetas[k] drives x_k -> x_{k+1} and y_{k+1}).
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> outputs;
  std::vector<Vector> thetas;
};

inline Trajectory simulate(const ModelSpec& model, const Vector& x0, const std::vector<Vector>& theta_trajectory,
                           std::size_t steps, std::uint64_t seed) {
  if (!x0.allFinite()) throw SimulationDivergence(0, "initial state is not finite");
  if (theta_trajectory.size() < steps) throw ConfigError("parameter trajectory shorter than step count");
  const Matrix l_sqrt = psd_sqrt(model.process_noise_cov);
  const Matrix v_sqrt = psd_sqrt(model.measurement_noise_cov);
  Rng rng = make_rng(seed, 0x5111);
  std::normal_distribution<double> normal;
  auto draw = [&](Eigen::Index n) {
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
    return z;
  };

  Trajectory traj;
  traj.states.reserve(steps + 1);
  traj.outputs.reserve(steps);
  traj.thetas.reserve(steps);
  traj.states.push_back(x0);
  Vector x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    const Vector& theta = theta_trajectory[k];
    const Vector omega = l_sqrt * draw(model.n_x);
    x = model.propagate(k, x, theta, omega);
    if (!x.allFinite()) throw SimulationDivergence(k + 1, "non-finite state");
    const Vector nu = v_sqrt * draw(model.n_y);
    Vector y = model.observe(x, theta) + nu;
    if (!y.allFinite()) throw SimulationDivergence(k + 1, "non-finite output");
    traj.states.push_back(x);
    traj.outputs.push_back(std::move(y));
    traj.thetas.push_back(theta);
  }
  return traj;
}

/// CSV with header t,x_1..,y_1..,theta_1..; the t=0 row carries x_0 and
/// "nan" placeholders for the output and parameter columns.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const long nx = traj.states.empty() ? 0 : traj.states.front().size();
  const long ny = traj.outputs.empty() ? 0 : traj.outputs.front().size();
  const long nt = traj.thetas.empty() ? 0 : traj.thetas.front().size();
  std::vector<std::string> header{"t"};
  for (auto& h : csv::indexed("x_", nx)) header.push_back(h);
  for (auto& h : csv::indexed("y_", ny)) header.push_back(h);
  for (auto& h : csv::indexed("theta_", nt)) header.push_back(h);
  csv::write_row(os, header);
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    std::vector<std::string> row{std::to_string(t)};
    for (long i = 0; i < nx; ++i) row.push_back(csv::fmt(traj.states[t](i)));
    for (long i = 0; i < ny; ++i) row.push_back(t == 0 ? "nan" : csv::fmt(traj.outputs[t - 1](i)));
    for (long i = 0; i < nt; ++i) row.push_back(t == 0 ? "nan" : csv::fmt(traj.thetas[t - 1](i)));
    csv::write_row(os, row);
  }
}

}  // namespace dpf
