#pragma once

#include <cstddef>
#include <vector>

#include "dpf/dual.hpp"

namespace dpf::baselines {

struct BayesianKSConfig {
  std::size_t particles = 45;
  double shrinkage = 0.93;
  Matrix evolution_cov;  // initial parameter covariance, n_theta x n_theta
  KernelCovSource kernel_cov = KernelCovSource::running;
  double cov_floor = 1e-12;
  double projection_factor = 0.5;
  RegularizationConfig regularization;
};

/// Augmented-state particle filter: (x, theta) are propagated jointly, the
/// parameters by kernel shrinkage only, with one likelihood weighting and a
/// regularized resampling of the augmented vector.
class BayesianKSFilter {
public:
  BayesianKSFilter(const ModelSpec& model, const GaussianPrior& x0, const GaussianPrior& theta0, BayesianKSConfig cfg,
                   std::uint64_t seed)
      : model_(model), cfg_(std::move(cfg)), rng_(make_rng(seed, 0xba7e5)) {
    model_.validate();
    if (cfg_.particles < 1) throw ConfigError("Bayesian filter needs particles");
    if (!(cfg_.shrinkage > 0.0 && cfg_.shrinkage <= 1.0)) throw ConfigError("shrinkage must lie in (0, 1]");
    if (cfg_.evolution_cov.rows() != model_.n_theta || cfg_.evolution_cov.cols() != model_.n_theta)
      throw ConfigError("evolution covariance must be n_theta x n_theta");
    cfg_.regularization.validate();
    if (!model_.param_domain.contains(theta0.mean)) throw DomainError("initial parameter mean lies outside the domain");
    Rng init = make_rng(seed, 0x1a19);
    const auto n = static_cast<Eigen::Index>(cfg_.particles);
    Matrix xs = sample_gaussian(x0.cov, cfg_.particles, init);
    xs.colwise() += x0.mean;
    Matrix ts = sample_gaussian(theta0.cov, cfg_.particles, init);
    ts.colwise() += theta0.mean;
    z_.resize(model_.n_x + model_.n_theta, n);
    z_.topRows(model_.n_x) = xs;
    for (Eigen::Index j = 0; j < n; ++j) z_.col(j).tail(model_.n_theta) = model_.param_domain.clamp(ts.col(j));
  }

  DualHistoryRow step(const Vector& y) {
    if (y.size() != model_.n_y) throw ConfigError("observation has wrong dimension");
    const auto nx = model_.n_x, nt = model_.n_theta;
    const auto n = z_.cols();
    const auto& dom = model_.param_domain;
    const double a = cfg_.shrinkage;

    const Matrix thetas = z_.bottomRows(nt);
    const Vector mbar = column_mean(thetas);
    Matrix kcov = cfg_.kernel_cov == KernelCovSource::running ? sample_covariance(thetas) : cfg_.evolution_cov;
    kcov = 0.5 * (kcov + kcov.transpose());
    kcov.diagonal() = kcov.diagonal().cwiseMax(cfg_.cov_floor);
    const Matrix zeta = sample_gaussian((1.0 - a * a) * kcov, static_cast<std::size_t>(n), rng_);
    const Matrix omega = sample_gaussian(model_.process_noise_cov, static_cast<std::size_t>(n), rng_);

    Matrix pred(nx + nt, n);
    Vector log_w(n);
    const GaussianLikelihood lik(model_.measurement_noise_cov);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector centre = a * thetas.col(j) + (1.0 - a) * mbar;
      const Vector th = project_step(centre, zeta.col(j), dom, cfg_.projection_factor).point;
      const Vector x = model_.propagate(k_, z_.col(j).head(nx), th, omega.col(j));
      if (!x.allFinite()) throw FilterDivergence(static_cast<std::size_t>(j), "non-finite predicted state", "bayesian");
      pred.col(j).head(nx) = x;
      pred.col(j).tail(nt) = th;
      log_w(j) = lik.log_density(y - model_.observe(x, th));
    }
    Vector w;
    try {
      w = normalize_log_weights(log_w);
    } catch (const DegenerateWeights& e) {
      throw DegenerateWeights(e.what(), "bayesian");
    }

    const Matrix cov = sample_covariance(pred);
    const Matrix whitening = psd_sqrt(cov, 1e-10 * std::max(1.0, cov.cwiseAbs().maxCoeff()));
    RegularizationResult reg = regularize(ParticleEnsemble{pred, w}, whitening, cfg_.regularization, rng_);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector src = pred.col(static_cast<Eigen::Index>(reg.ancestors[static_cast<std::size_t>(j)])).tail(nt);
      const Vector jitter = reg.particles.col(j).tail(nt) - src;
      reg.particles.col(j).tail(nt) = project_step(src, jitter, dom, cfg_.projection_factor).point;
      ++particle_checks_;
      if (!dom.contains(reg.particles.col(j).tail(nt))) ++domain_violations_;
    }
    z_ = std::move(reg.particles);
    ++k_;

    DualHistoryRow row;
    row.t = k_;
    const Vector mean = column_mean(z_);
    row.state = mean.head(nx);
    row.theta = mean.tail(nt);
    row.output = model_.observe(row.state, row.theta);
    row.ess_state = row.ess_param = effective_sample_size(w);
    return row;
  }

  EstimationTrajectory run(const std::vector<Vector>& observations) {
    EstimationTrajectory out;
    out.rows.reserve(observations.size());
    for (const Vector& y : observations) out.rows.push_back(step(y));
    out.domain_violations = domain_violations_;
    out.particle_checks = particle_checks_;
    return out;
  }

  const Matrix& particles() const { return z_; }

private:
  ModelSpec model_;
  BayesianKSConfig cfg_;
  Rng rng_;
  Matrix z_;
  std::size_t k_ = 0;
  std::size_t domain_violations_ = 0;
  std::size_t particle_checks_ = 0;
};

}  // namespace dpf::baselines
