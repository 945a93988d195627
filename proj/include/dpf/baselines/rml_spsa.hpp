#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

#include "dpf/dual.hpp"

namespace dpf::baselines {

struct RmlSpsaConfig {
  std::size_t particles = 150;
  StepSchedule gain{0.05, 0.05, 0.0};
  double perturbation = 0.01;      // c_t, constant
  double max_step = 1e-3;          // per-component clip on the update; 0 disables
  double projection_factor = 0.5;
  RegularizationConfig regularization;
};

struct SpsaGradient {
  Vector gradient;
  Vector delta;
  double j_plus = 0.0;
  double j_minus = 0.0;
  bool defined = true;
};

/// log (1/N) sum exp(v), stable.
inline double log_mean_exp(const Vector& v) {
  const double peak = v.maxCoeff();
  if (!std::isfinite(peak)) return -std::numeric_limits<double>::infinity();
  return peak + std::log((v.array() - peak).exp().mean());
}

/// Two-sided SPSA estimate of the gradient of the one-step log-likelihood
/// log (1/N) sum_i p(y | f(x_i, theta +- c delta, omega_i)) with Rademacher
/// delta and common process noise in both branches.
inline SpsaGradient spsa_gradient(const Matrix& particles, const Vector& theta, const Vector& y, const ModelSpec& model,
                                  std::size_t step, double c, Rng& rng) {
  const auto nt = theta.size();
  const auto n = particles.cols();
  SpsaGradient g;
  g.delta.resize(nt);
  std::bernoulli_distribution coin(0.5);
  for (Eigen::Index k = 0; k < nt; ++k) g.delta(k) = coin(rng) ? 1.0 : -1.0;
  const Vector tp = theta + c * g.delta;
  const Vector tm = theta - c * g.delta;
  const Matrix omega = sample_gaussian(model.process_noise_cov, static_cast<std::size_t>(n), rng);
  const GaussianLikelihood lik(model.measurement_noise_cov);
  Vector lp(n), lm(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector xp = model.propagate(step, particles.col(i), tp, omega.col(i));
    const Vector xm = model.propagate(step, particles.col(i), tm, omega.col(i));
    lp(i) = lik.log_density(y - model.observe(xp, tp));
    lm(i) = lik.log_density(y - model.observe(xm, tm));
  }
  g.j_plus = log_mean_exp(lp);
  g.j_minus = log_mean_exp(lm);
  if (!std::isfinite(g.j_plus) || !std::isfinite(g.j_minus)) {
    g.defined = false;
    g.gradient = Vector::Zero(nt);
    return g;
  }
  g.gradient = Vector::Constant(nt, (g.j_plus - g.j_minus) / (2.0 * c)).cwiseQuotient(g.delta);
  return g;
}

/// Recursive maximum likelihood with an SPSA gradient: a point parameter
/// estimate updated by a stochastic gradient step, followed by a regularized
/// particle filter state step at the new estimate.
class RmlSpsaFilter {
public:
  RmlSpsaFilter(const ModelSpec& model, const GaussianPrior& x0, const Vector& theta0, RmlSpsaConfig cfg,
                std::uint64_t seed)
      : model_(model), cfg_(std::move(cfg)), rng_(make_rng(seed, 0x5b5a)), state_(init_state(x0, cfg_, seed)),
        theta_(theta0) {
    model_.validate();
    if (!(cfg_.perturbation > 0.0)) throw ConfigError("SPSA perturbation must be positive");
    if (!(cfg_.gain.initial >= 0.0 && cfg_.gain.limit >= 0.0)) throw ConfigError("RML gain must be nonnegative");
    if (!model_.param_domain.contains(theta_)) throw DomainError("initial parameter lies outside the domain");
  }

  DualHistoryRow step(const Vector& y) {
    if (y.size() != model_.n_y) throw ConfigError("observation has wrong dimension");
    const std::size_t k = state_.steps();
    SpsaGradient g = spsa_gradient(state_.ensemble().particles, theta_, y, model_, k, cfg_.perturbation, rng_);
    if (g.defined) {
      Vector delta = cfg_.gain.at(k) * g.gradient;
      if (cfg_.max_step > 0.0) delta = delta.cwiseMax(-cfg_.max_step).cwiseMin(cfg_.max_step);
      ProjectionResult p = project_step(theta_, delta, model_.param_domain, cfg_.projection_factor);
      projection_flags_ += p.flagged ? 1 : 0;
      theta_ = p.point;
    } else {
      ++skipped_;
    }
    ++particle_checks_;
    if (!model_.param_domain.contains(theta_)) ++domain_violations_;
    StateStepResult s;
    try {
      s = state_.step(theta_, y, model_, rng_);
    } catch (const DegenerateWeights& e) {
      throw DegenerateWeights(e.what(), "rml");
    }
    DualHistoryRow row{k + 1, s.estimate, theta_, s.output_estimate, s.ess, 0.0, 0.0};
    row.output = model_.observe(s.estimate, theta_);
    return row;
  }

  EstimationTrajectory run(const std::vector<Vector>& observations) {
    EstimationTrajectory out;
    out.rows.reserve(observations.size());
    for (const Vector& y : observations) out.rows.push_back(step(y));
    out.domain_violations = domain_violations_;
    out.particle_checks = particle_checks_;
    out.projection_flags = projection_flags_;
    return out;
  }

  const Vector& estimate() const { return theta_; }
  std::size_t skipped_steps() const { return skipped_; }

private:
  static StateFilter init_state(const GaussianPrior& x0, const RmlSpsaConfig& cfg, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x1a1a);
    return StateFilter::from_gaussian(x0.mean, x0.cov, {cfg.particles, cfg.regularization}, rng);
  }

  ModelSpec model_;
  RmlSpsaConfig cfg_;
  Rng rng_;
  StateFilter state_;
  Vector theta_;
  std::size_t skipped_ = 0;
  std::size_t projection_flags_ = 0;
  std::size_t domain_violations_ = 0;
  std::size_t particle_checks_ = 0;
};

}  // namespace dpf::baselines
