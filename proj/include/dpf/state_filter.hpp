#pragma once

#include <cstddef>

#include "dpf/model.hpp"
#include "dpf/smc_core.hpp"

namespace dpf {

struct StateFilterConfig {
  std::size_t particles = 50;
  RegularizationConfig regularization;
};

struct StatePrediction {
  Matrix particles;  // x_{t|t-1}^(i), n_x x N
  Matrix prior_cov;  // sample covariance of the predicted particles (divisor N-1)
  Matrix outputs;    // y_{t|t-1}^(i), n_y x N
};

struct StateStepResult {
  Vector estimate;          // x_{t|t}
  Vector output_estimate;   // h(x_{t|t}, theta_{t-1|t-1})
  Vector prior_mean;        // mean of x_{t|t-1}
  Matrix predicted_output_cov;
  double ess = 0.0;         // of the pre-resampling weights
  bool collapsed = false;
};

/// Regularized bootstrap particle filter for the state, conditioned on a
/// given parameter estimate.
class StateFilter {
public:
  StateFilter(Matrix initial_particles, StateFilterConfig cfg)
      : cfg_(std::move(cfg)), ensemble_(ParticleEnsemble::uniform(std::move(initial_particles))) {
    if (ensemble_.size() < 1) throw ConfigError("state filter needs particles");
    cfg_.regularization.validate();
    estimate_ = ensemble_.mean();
    prior_cov_ = Matrix::Zero(ensemble_.dim(), ensemble_.dim());
  }

  static StateFilter from_gaussian(const Vector& mean, const Matrix& cov, StateFilterConfig cfg, Rng& rng) {
    Matrix p = sample_gaussian(cov, cfg.particles, rng);
    p.colwise() += mean;
    return StateFilter(std::move(p), std::move(cfg));
  }

  StatePrediction predict(const Vector& theta_hat, const ModelSpec& model, Rng& rng) const {
    const auto n = ensemble_.size();
    const Matrix noise = sample_gaussian(model.process_noise_cov, static_cast<std::size_t>(n), rng);
    StatePrediction pred;
    pred.particles.resize(model.n_x, n);
    pred.outputs.resize(model.n_y, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pred.particles.col(i) = model.propagate(steps_, ensemble_.particles.col(i), theta_hat, noise.col(i));
      if (!pred.particles.col(i).allFinite())
        throw FilterDivergence(static_cast<std::size_t>(i), "non-finite predicted state");
      pred.outputs.col(i) = model.observe(pred.particles.col(i), theta_hat);
    }
    pred.prior_cov = sample_covariance(pred.particles);
    return pred;
  }

  /// Normalized likelihood weights N(y - y_i; 0, V).
  static Vector update(const Matrix& predicted_outputs, const Vector& y, const ModelSpec& model) {
    const GaussianLikelihood lik(model.measurement_noise_cov);
    Vector log_w(predicted_outputs.cols());
    for (Eigen::Index i = 0; i < predicted_outputs.cols(); ++i)
      log_w(i) = lik.log_density(y - predicted_outputs.col(i));
    return normalize_log_weights(log_w);
  }

  StateStepResult step(const Vector& theta_hat, const Vector& y, const ModelSpec& model, Rng& rng) {
    StatePrediction pred = predict(theta_hat, model, rng);
    const Vector w = update(pred.outputs, y, model);
    StateStepResult r;
    r.ess = effective_sample_size(w);
    r.collapsed = weights_collapsed(w);
    r.prior_mean = column_mean(pred.particles);
    r.predicted_output_cov = sample_covariance(pred.outputs);
    const ParticleEnsemble weighted{pred.particles, w};
    const Matrix whitening = psd_sqrt(pred.prior_cov, 1e-10 * std::max(1.0, pred.prior_cov.cwiseAbs().maxCoeff()));
    RegularizationResult reg = regularize(weighted, whitening, cfg_.regularization, rng);
    ensemble_ = ParticleEnsemble::uniform(std::move(reg.particles));
    prior_cov_ = std::move(pred.prior_cov);
    estimate_ = column_mean(ensemble_.particles);
    ++steps_;
    r.estimate = estimate_;
    r.output_estimate = model.observe(estimate_, theta_hat);
    return r;
  }

  const ParticleEnsemble& ensemble() const { return ensemble_; }
  const Vector& estimate() const { return estimate_; }
  const Matrix& prior_cov() const { return prior_cov_; }
  const StateFilterConfig& config() const { return cfg_; }
  std::size_t steps() const { return steps_; }

private:
  StateFilterConfig cfg_;
  ParticleEnsemble ensemble_;
  Vector estimate_;
  Matrix prior_cov_;
  std::size_t steps_ = 0;
};

}  // namespace dpf
