#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>

#include "dpf/model.hpp"
#include "dpf/smc_core.hpp"

namespace dpf {

enum class JacobianMode { analytic, finite_difference };

/// Where the parameter filter evaluates candidate outputs.
///  - posterior_state: h(x_{t|t}, theta), the state filter's posterior mean.
///  - one_step: h(f(x_{t-1|t-1}, theta, 0), theta), the noise-free one-step
///    predictor; needed when a parameter acts on the outputs only through f.
enum class OutputPredictor { posterior_state, one_step };

/// Covariance handed to the kernel-smoothing noise.
enum class KernelCovSource { running, initial };

/// gamma_t = limit + (initial - limit) / (1 + decay * t). decay = 0 gives a
/// constant step.
struct StepSchedule {
  double initial = 0.9;
  double limit = 0.9;
  double decay = 0.0;

  double at(std::size_t t) const { return limit + (initial - limit) / (1.0 + decay * static_cast<double>(t)); }
};

struct PmaxConfig {
  double gamma0 = 0.9;
  Matrix emax_cov;  // E_max E_max^T, n_y x n_y

  double pmax() const { return gamma0 * std::sqrt(emax_cov.trace()); }
};

struct ParamFilterConfig {
  std::size_t particles = 50;
  double shrinkage = 0.93;
  StepSchedule step_size;
  double projection_factor = 0.5;
  Matrix evolution_cov;  // V_theta: initial covariance and non-dispersion target
  std::size_t pe_window = 10;
  JacobianMode jacobian = JacobianMode::finite_difference;
  double fd_step = 1e-5;
  std::optional<PmaxConfig> pmax;
  KernelCovSource kernel_cov = KernelCovSource::running;
  OutputPredictor predictor = OutputPredictor::posterior_state;
  double cov_floor = 1e-12;

  void validate(Eigen::Index n_theta) const {
    if (particles < 1) throw ConfigError("parameter filter needs particles");
    if (!(shrinkage > 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage must lie in (0, 1]");
    if (!(step_size.initial > 0.0 && step_size.limit > 0.0)) throw ConfigError("step size must be positive");
    if (!(projection_factor >= 0.0 && projection_factor <= 1.0))
      throw ConfigError("projection factor must lie in [0, 1]");
    if (evolution_cov.rows() != n_theta || evolution_cov.cols() != n_theta)
      throw ConfigError("evolution covariance must be n_theta x n_theta");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(evolution_cov);
    if (eig.eigenvalues().minCoeff() <= 0.0) throw CovarianceError("evolution covariance must be positive definite");
    if (pe_window < 1) throw ConfigError("PE window must be at least 1");
    if (!(fd_step > 0.0)) throw ConfigError("finite-difference step must be positive");
  }
};

/// State-side information the parameter filter is allowed to read at step t.
struct StateContext {
  Vector posterior;       // x_{t|t}
  Vector previous;        // x_{t-1|t-1}; read only by the one-step predictor
  std::size_t step = 0;   // transition index used to reach x_t
  Matrix predicted_output_cov;  // spread of y_{t|t-1}; widens the one-step likelihood
};

inline Vector predicted_output(const Vector& theta, const StateContext& ctx, const ModelSpec& model,
                               OutputPredictor predictor) {
  if (predictor == OutputPredictor::posterior_state) return model.observe(ctx.posterior, theta);
  const Vector x = model.propagate(ctx.step, ctx.previous, theta, Vector::Zero(model.n_x));
  return model.observe(x, theta);
}

/// epsilon = y - h(x, theta).
inline Vector prediction_error(const Vector& theta, const StateContext& ctx, const Vector& y, const ModelSpec& model,
                               OutputPredictor predictor = OutputPredictor::posterior_state) {
  return y - predicted_output(theta, ctx, model, predictor);
}

/// R = || epsilon - mean(epsilon) ||, the Euclidean norm of the centered error.
inline double updating_gain(const Vector& eps) {
  if (eps.size() == 0) return 0.0;
  return (eps.array() - eps.mean()).matrix().norm();
}

/// psi = (d y / d theta)^T, n_theta x n_y.
inline Matrix output_jacobian(const Vector& theta, const StateContext& ctx, const ModelSpec& model,
                              const ParamFilterConfig& cfg) {
  if (cfg.jacobian == JacobianMode::analytic && model.output_jacobian &&
      cfg.predictor == OutputPredictor::posterior_state)
    return model.output_jacobian(ctx.posterior, theta).transpose();

  const auto& dom = model.param_domain;
  Matrix psi(model.n_theta, model.n_y);
  for (Eigen::Index k = 0; k < model.n_theta; ++k) {
    const double eta = cfg.fd_step * std::max(1.0, std::abs(theta(k)));
    Vector up = theta, down = theta;
    up(k) += eta;
    down(k) -= eta;
    const bool up_ok = dom.dim() == 0 || up(k) <= dom.upper(k);
    const bool down_ok = dom.dim() == 0 || down(k) >= dom.lower(k);
    if (up_ok && down_ok) {
      psi.row(k) = (predicted_output(up, ctx, model, cfg.predictor) - predicted_output(down, ctx, model, cfg.predictor))
                       .transpose() / (2.0 * eta);
    } else if (up_ok) {
      psi.row(k) = (predicted_output(up, ctx, model, cfg.predictor) - predicted_output(theta, ctx, model, cfg.predictor))
                       .transpose() / eta;
    } else {
      psi.row(k) = (predicted_output(theta, ctx, model, cfg.predictor) - predicted_output(down, ctx, model, cfg.predictor))
                       .transpose() / eta;
    }
  }
  return psi;
}

struct ProjectionResult {
  Vector point;
  std::size_t scalings = 0;
  bool flagged = false;  // gave up after the scaling budget and returned the start point
};

/// Shrinks `raw_step` by mu until theta_prev + step lies in the domain.
inline ProjectionResult project_step(const Vector& theta_prev, const Vector& raw_step, const ParamDomain& domain,
                                     double mu, std::size_t max_scalings = 64) {
  ProjectionResult r;
  Vector step = raw_step;
  for (;;) {
    Vector candidate = theta_prev + step;
    if (domain.contains(candidate)) {
      r.point = std::move(candidate);
      return r;
    }
    if (r.scalings == max_scalings) {
      r.point = theta_prev;
      r.flagged = true;
      return r;
    }
    step *= mu;
    ++r.scalings;
  }
}

struct ShrinkageBound {
  double a_max = 0.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  bool degenerate = false;  // sigma_min == sigma_max, e.g. a scalar parameter
  std::string warning;
};

/// a_max = 1 - sqrt(sigma_min(M) / sigma_max(M)),
/// M = pmax^2 Psi V_y Psi^T V_theta^{-1}, with Psi n_theta x n_y.
inline ShrinkageBound shrinkage_upper_bound(double pmax, const Matrix& psi, const Matrix& vy, const Matrix& vtheta) {
  const Matrix m = pmax * pmax * psi * vy * psi.transpose() * vtheta.inverse();
  Eigen::EigenSolver<Matrix> es(m, false);
  const Vector ev = es.eigenvalues().real();
  ShrinkageBound b;
  b.sigma_min = ev.minCoeff();
  b.sigma_max = ev.maxCoeff();
  if (!(b.sigma_max > 0.0)) throw DomainError("shrinkage bound undefined: sigma_max(M) = 0");
  b.a_max = 1.0 - std::sqrt(std::max(b.sigma_min, 0.0) / b.sigma_max);
  const double spread = b.sigma_max - b.sigma_min;
  if (m.rows() == 1 || spread <= 1e-12 * b.sigma_max) {
    b.degenerate = true;
    b.warning = "shrinkage bound degenerates to 0: eigenvalues of M coincide";
  }
  return b;
}

struct EvolveResult {
  Matrix intermediate;       // theta~_{t|t}, n_theta x N
  Matrix gradient_points;    // m_t^(j) after projection
  std::size_t projection_flags = 0;
  double mean_cost = 0.0;    // mean over particles of 0.5 eps^T eps
};

struct ParamStepResult {
  Vector estimate;          // theta_{t|t}
  Vector output_estimate;   // h(x_{t|t}, theta_{t|t})
  double ess = 0.0;
  double averaged_cost = 0.0;  // J-bar over the PE window
  std::size_t projection_flags = 0;
};

/// Parameter particle filter driven by the prediction-error modified
/// artificial evolution with kernel shrinkage, likelihood reweighting and
/// residual resampling.
class ParamFilter {
public:
  ParamFilter(Matrix initial_particles, ParamFilterConfig cfg, const ParamDomain& domain)
      : cfg_(std::move(cfg)), ensemble_(ParticleEnsemble::uniform(std::move(initial_particles))) {
    cfg_.validate(ensemble_.dim());
    for (Eigen::Index j = 0; j < ensemble_.size(); ++j)
      if (!domain.contains(ensemble_.particles.col(j)))
        ensemble_.particles.col(j) = domain.clamp(ensemble_.particles.col(j));
    estimate_ = ensemble_.mean();
    prev_mean_ = estimate_;
    cov_ = cfg_.evolution_cov;
  }

  static ParamFilter from_gaussian(const Vector& mean, const Matrix& cov, ParamFilterConfig cfg,
                                   const ParamDomain& domain, Rng& rng) {
    if (!domain.contains(mean)) throw DomainError("initial parameter mean lies outside the domain");
    Matrix p = sample_gaussian(cov, cfg.particles, rng);
    p.colwise() += mean;
    return ParamFilter(std::move(p), std::move(cfg), domain);
  }

  double step_size() const { return cfg_.step_size.at(steps_); }

  Matrix kernel_cov() const {
    const Matrix base = cfg_.kernel_cov == KernelCovSource::running ? cov_ : cfg_.evolution_cov;
    Matrix floored = 0.5 * (base + base.transpose());
    floored.diagonal() = floored.diagonal().cwiseMax(cfg_.cov_floor);
    return floored;
  }

  /// Gradient step with projection, shrinkage toward the previous mean and
  /// kernel noise; the result is kept inside the domain.
  EvolveResult evolve(const StateContext& ctx, const Vector& y, const ModelSpec& model, Rng& rng) const {
    const auto n = ensemble_.size();
    const auto& dom = model.param_domain;
    const double a = cfg_.shrinkage;
    const double gamma = step_size();
    const Vector mbar = column_mean(ensemble_.particles);

    EvolveResult r;
    r.gradient_points.resize(ensemble_.dim(), n);
    double cost = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector theta = ensemble_.particles.col(j);
      const Vector eps = prediction_error(theta, ctx, y, model, cfg_.predictor);
      if (!eps.allFinite()) throw FilterDivergence(static_cast<std::size_t>(j), "non-finite prediction error");
      cost += 0.5 * eps.squaredNorm();
      const double gain = updating_gain(eps);
      Vector raw = Vector::Zero(theta.size());
      if (gain > 0.0) raw = gamma * gain * (output_jacobian(theta, ctx, model, cfg_) * eps);
      ProjectionResult proj = project_step(theta, raw, dom, cfg_.projection_factor);
      r.projection_flags += proj.flagged ? 1 : 0;
      r.gradient_points.col(j) = proj.point;
    }
    r.mean_cost = cost / static_cast<double>(n);

    const Matrix zeta = sample_gaussian((1.0 - a * a) * kernel_cov(), static_cast<std::size_t>(n), rng);
    r.intermediate.resize(ensemble_.dim(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector centre = a * r.gradient_points.col(j) + (1.0 - a) * mbar;
      ProjectionResult proj = project_step(centre, zeta.col(j), dom, cfg_.projection_factor);
      r.projection_flags += proj.flagged ? 1 : 0;
      r.intermediate.col(j) = proj.point;
    }
    return r;
  }

  /// Likelihood reweighting of the intermediate particles, residual
  /// resampling, posterior mean and covariance.
  ParamStepResult update(const Matrix& intermediate, const StateContext& ctx, const Vector& y, const ModelSpec& model,
                         Rng& rng) {
    Matrix lik_cov = model.measurement_noise_cov;
    if (cfg_.predictor == OutputPredictor::one_step && ctx.predicted_output_cov.rows() == model.n_y)
      lik_cov += ctx.predicted_output_cov;
    const GaussianLikelihood lik(lik_cov);
    const auto n = intermediate.cols();
    Vector log_w(n);
    for (Eigen::Index j = 0; j < n; ++j)
      log_w(j) = lik.log_density(y - predicted_output(intermediate.col(j), ctx, model, cfg_.predictor));
    const Vector w = normalize_log_weights(log_w);

    ParamStepResult r;
    r.ess = effective_sample_size(w);
    const auto idx = resample_residual(w, static_cast<std::size_t>(n), rng);
    prev_mean_ = column_mean(ensemble_.particles);
    ensemble_ = ParticleEnsemble::uniform(gather_columns(intermediate, idx));
    estimate_ = column_mean(ensemble_.particles);
    cov_ = sample_covariance(ensemble_.particles);
    for (Eigen::Index j = 0; j < n; ++j) {
      ++particle_checks_;
      if (!model.param_domain.contains(ensemble_.particles.col(j))) ++domain_violations_;
    }
    ++steps_;
    r.estimate = estimate_;
    r.output_estimate = model.observe(ctx.posterior, estimate_);
    return r;
  }

  ParamStepResult step(const StateContext& ctx, const Vector& y, const ModelSpec& model, Rng& rng) {
    if (!bound_ && cfg_.pmax) {
      const Matrix psi = output_jacobian(estimate_, ctx, model, cfg_);
      try {
        bound_ = shrinkage_upper_bound(cfg_.pmax->pmax(), psi, model.measurement_noise_cov, cfg_.evolution_cov);
        if (cfg_.shrinkage > bound_->a_max && bound_->warning.empty())
          bound_->warning = "configured shrinkage exceeds the upper bound " + std::to_string(bound_->a_max);
      } catch (const DomainError& e) {
        bound_ = ShrinkageBound{0.0, 0.0, 0.0, true, e.what()};
      }
    }
    EvolveResult ev = evolve(ctx, y, model, rng);
    ParamStepResult r = update(ev.intermediate, ctx, y, model, rng);
    r.projection_flags = ev.projection_flags;
    costs_.push_back(ev.mean_cost);
    while (costs_.size() > cfg_.pe_window) costs_.pop_front();
    double total = 0.0;
    for (double c : costs_) total += c;
    r.averaged_cost = total / static_cast<double>(costs_.size());
    return r;
  }

  const ParticleEnsemble& ensemble() const { return ensemble_; }
  const Vector& estimate() const { return estimate_; }
  const Vector& previous_mean() const { return prev_mean_; }
  const Matrix& covariance() const { return cov_; }
  const ParamFilterConfig& config() const { return cfg_; }
  const std::optional<ShrinkageBound>& shrinkage_bound() const { return bound_; }
  std::size_t steps() const { return steps_; }
  std::size_t domain_violations() const { return domain_violations_; }
  std::size_t particle_checks() const { return particle_checks_; }

private:
  ParamFilterConfig cfg_;
  ParticleEnsemble ensemble_;
  Vector estimate_;
  Vector prev_mean_;
  Matrix cov_;
  std::size_t steps_ = 0;
  std::size_t domain_violations_ = 0;
  std::size_t particle_checks_ = 0;
  std::deque<double> costs_;
  std::optional<ShrinkageBound> bound_;
};

}  // namespace dpf
