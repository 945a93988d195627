#pragma once

// Single-scenario execution: truth simulation, estimation, residuals,
// decisions and MAE% tables.

#include <algorithm>
#include <chrono>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dpf/harness/config.hpp"
#include "dpf/harness/models.hpp"

namespace dpf::harness {

/// Everything a run needs besides the estimator: the model, the true
/// initial state and the true parameter at each step.
struct Problem {
  ModelSpec model;
  Vector x0;
  Vector theta_nominal;
  std::vector<Vector> theta_truth;
  std::size_t steps = 0;
  std::vector<std::size_t> phase_starts;  // step indices, first is 0
};

inline gas_turbine::FaultScenario to_fault_scenario(const ScenarioConfig& s) {
  gas_turbine::FaultScenario sc;
  sc.name = s.name;
  sc.duration = s.duration;
  sc.fuel_step_time = s.fuel_step_time;
  sc.fuel_step = s.fuel_step;
  for (const auto& e : s.events)
    sc.events.push_back({e.start, gas_turbine::component_from_name(e.component),
                         e.profile == "drift" ? gas_turbine::Profile::drift : gas_turbine::Profile::step, e.magnitude,
                         e.ramp_end});
  sc.validate();
  return sc;
}

inline ModelSpec build_model(const RunConfig& c, const gas_turbine::FaultScenario& sc) {
  if (c.model == "gas_turbine") {
    gas_turbine::EstimationModelOptions o;
    o.dt = c.dt;
    if (c.process_std > 0.0) o.process_std = c.process_std;
    if (c.measurement_std > 0.0) o.measurement_std = c.measurement_std;
    return gas_turbine::estimation_model(gas_turbine::design(gas_turbine::DesignPoint{}), sc, o);
  }
  if (c.model == "synthetic_health4") {
    models::Health4Options o;
    if (c.process_std > 0.0) o.process_std = c.process_std;
    if (c.measurement_std > 0.0) o.measurement_std = c.measurement_std;
    return models::health4(o);
  }
  if (c.model == "synthetic_scalar") {
    const double q = c.process_std > 0.0 ? c.process_std * c.process_std : 1.0;
    const double r = c.measurement_std > 0.0 ? c.measurement_std * c.measurement_std : 0.01;
    return models::scalar_ar1(q, r);
  }
  if (c.model == "linear_gaussian") return models::linear_gaussian_2d();
  throw ConfigError("unknown model '" + c.model + "'");
}

inline Vector to_vector(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

inline Vector nominal_theta(const RunConfig& c, Eigen::Index n) {
  if (c.theta_nominal.empty()) return Vector::Ones(n);
  if (static_cast<Eigen::Index>(c.theta_nominal.size()) != n) throw ConfigError("theta_nominal has wrong dimension");
  return to_vector(c.theta_nominal);
}

inline Vector initial_state(const RunConfig& c, const ModelSpec& m) {
  // Per-unit models start at their nominal operating point, the zero-mean
  // linear models at the origin.
  if (c.model == "gas_turbine" || c.model == "synthetic_health4") return Vector::Ones(m.n_x);
  return Vector::Zero(m.n_x);
}

inline Problem build_problem(const RunConfig& c, const gas_turbine::FaultScenario& sc) {
  Problem p;
  p.model = build_model(c, sc);
  p.model.validate();
  p.x0 = initial_state(c, p.model);
  p.theta_nominal = nominal_theta(c, p.model.n_theta);
  p.steps = static_cast<std::size_t>(std::llround(sc.duration / c.dt));
  if (p.steps < 1) throw ConfigError("duration is shorter than one step");
  for (const auto& e : sc.events)
    if (static_cast<Eigen::Index>(e.component) >= p.model.n_theta)
      throw ConfigError(std::string("fault component ") + gas_turbine::component_name(e.component) +
                        " is outside the parameter vector of model " + p.model.name);
  p.theta_truth.reserve(p.steps);
  for (std::size_t k = 0; k < p.steps; ++k) {
    const Vector h = gas_turbine::health_at(sc, static_cast<double>(k) * c.dt).to_vector();
    p.theta_truth.push_back(p.theta_nominal.cwiseProduct(h.head(p.model.n_theta)));
  }
  std::set<std::size_t> starts{0};
  for (const auto& e : sc.events) {
    const auto s = static_cast<std::size_t>(std::llround(e.start / c.dt));
    if (s > 0 && s < p.steps) starts.insert(s);
  }
  p.phase_starts.assign(starts.begin(), starts.end());
  return p;
}

struct Budget {
  std::size_t dual = 0;
  std::size_t bayesian = 0;
  std::size_t rml = 0;
};

/// Particle counts per method. "fixed" takes the configured counts; the
/// matched modes derive the baseline counts from the dual count through the
/// equivalent-flop polynomials.
inline Budget particle_budget(const RunConfig& c, const ModelSpec& m) {
  Budget b{c.particles, c.particles_bayesian, c.particles_rml};
  if (c.budget == "fixed") return b;
  const complexity::CostModel cm{static_cast<double>(m.n_x), static_cast<double>(m.n_theta),
                                 static_cast<double>(m.n_y), c.c1, c.c2, c.c3, static_cast<double>(c.particles)};
  auto match = c.budget == "matched_exact" ? complexity::match_particle_budget_exact
                                           : complexity::match_particle_budget;
  b.bayesian = static_cast<std::size_t>(match(complexity::Method::bayesian, static_cast<double>(c.particles), cm));
  b.rml = static_cast<std::size_t>(match(complexity::Method::rml, static_cast<double>(c.particles), cm));
  return b;
}

inline RegularizationConfig regularization(const RunConfig& c) {
  RegularizationConfig r;
  r.n_reg = c.n_reg;
  r.bandwidth = c.bandwidth;
  r.kernel = c.kernel == "epanechnikov" ? Kernel::epanechnikov : Kernel::gaussian;
  return r;
}

inline KernelCovSource kernel_source(const std::string& s) {
  return s == "initial" ? KernelCovSource::initial : KernelCovSource::running;
}

inline DualConfig dual_config(const RunConfig& c, const ModelSpec& m, std::size_t particles) {
  const auto& d = c.dual;
  DualConfig cfg;
  cfg.state.particles = particles;
  cfg.state.regularization = regularization(c);
  auto& p = cfg.param;
  p.particles = particles;
  p.shrinkage = d.shrinkage;
  p.step_size = StepSchedule{d.gamma, d.gamma_limit, d.gamma_decay};
  p.projection_factor = d.projection_factor;
  p.evolution_cov = Matrix::Identity(m.n_theta, m.n_theta) * d.evolution_var;
  p.pe_window = d.pe_window;
  p.jacobian = d.jacobian == "analytic" ? JacobianMode::analytic : JacobianMode::finite_difference;
  p.fd_step = d.fd_step;
  if (d.emax_var > 0.0) p.pmax = PmaxConfig{d.pmax_gamma0, Matrix::Identity(m.n_y, m.n_y) * d.emax_var};
  p.kernel_cov = kernel_source(d.kernel_cov);
  p.predictor = d.predictor == "posterior_state" ? OutputPredictor::posterior_state : OutputPredictor::one_step;
  p.cov_floor = d.cov_floor;
  return cfg;
}

struct EstimatorRun {
  EstimationTrajectory trajectory;
  std::size_t particles = 0;
  double seconds = 0.0;  // wall clock, reported apart from numeric outputs
};

/// Runs one estimator over the observation sequence.
inline EstimatorRun run_estimator(const std::string& method, const RunConfig& c, const Problem& p,
                                  const std::vector<Vector>& obs, std::uint64_t seed) {
  const Budget budget = particle_budget(c, p.model);
  const GaussianPrior x0{p.x0, Matrix::Identity(p.model.n_x, p.model.n_x) * std::max(c.state_prior_var, 1e-12)};
  const Vector theta_mean = c.theta0_mean.empty() ? p.theta_nominal : to_vector(c.theta0_mean);
  if (theta_mean.size() != p.model.n_theta) throw ConfigError("theta0_mean has wrong dimension");
  const Matrix theta_cov = Matrix::Identity(p.model.n_theta, p.model.n_theta) * c.dual.evolution_var;
  const GaussianPrior theta0{theta_mean, theta_cov};
  EstimatorRun out;
  const auto t0 = std::chrono::steady_clock::now();
  if (method == "dual") {
    out.particles = budget.dual;
    DualEstimator e(p.model, x0, theta0, dual_config(c, p.model, budget.dual), seed);
    out.trajectory = e.run(obs);
  } else if (method == "bayesian") {
    out.particles = budget.bayesian;
    baselines::BayesianKSConfig cfg;
    cfg.particles = budget.bayesian;
    cfg.shrinkage = c.bayesian.shrinkage;
    cfg.evolution_cov = theta_cov;
    cfg.kernel_cov = kernel_source(c.bayesian.kernel_cov);
    cfg.cov_floor = c.dual.cov_floor;
    cfg.projection_factor = c.dual.projection_factor;
    cfg.regularization = regularization(c);
    baselines::BayesianKSFilter e(p.model, x0, theta0, cfg, seed);
    out.trajectory = e.run(obs);
  } else if (method == "rml") {
    out.particles = budget.rml;
    baselines::RmlSpsaConfig cfg;
    cfg.particles = budget.rml;
    cfg.gain = StepSchedule{c.rml.gain, c.rml.gain, 0.0};
    cfg.perturbation = c.rml.perturbation;
    cfg.max_step = c.rml.max_step;
    cfg.projection_factor = c.dual.projection_factor;
    cfg.regularization = regularization(c);
    baselines::RmlSpsaFilter e(p.model, x0, theta_mean, cfg, seed);
    out.trajectory = e.run(obs);
  } else {
    throw ConfigError("unknown estimator '" + method + "'");
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline std::size_t seconds_to_steps(double s, double dt) { return static_cast<std::size_t>(std::llround(s / dt)); }

/// Healthy baseline from the estimates in [baseline_from, baseline_to) and the
/// residual sequence it implies.
struct ResidualSeries {
  diagnosis::HealthyBaseline baseline;
  std::vector<Vector> residuals;
};

inline ResidualSeries residual_series(const EstimationTrajectory& e, const RunConfig& c) {
  const std::size_t from = seconds_to_steps(c.diagnosis.baseline_from, c.dt);
  const std::size_t to = std::min(seconds_to_steps(c.diagnosis.baseline_to, c.dt), e.rows.size());
  if (from + 2 > to) throw CalibrationError("baseline window holds fewer than two estimates");
  std::vector<Vector> window;
  for (std::size_t t = from; t < to; ++t) window.push_back(e.rows[t].theta);
  ResidualSeries r;
  r.baseline = diagnosis::fit_healthy_baseline(window, seconds_to_steps(2.0, c.dt));
  r.residuals.reserve(e.rows.size());
  for (const auto& row : e.rows) r.residuals.push_back(diagnosis::residual(r.baseline, row.theta));
  return r;
}

inline diagnosis::DecisionConfig decision_config(const RunConfig& c, std::size_t start) {
  return {c.diagnosis.persistence, std::max<std::size_t>(1, seconds_to_steps(c.diagnosis.severity_window, c.dt)),
          start};
}

inline std::string ordinal_phase(std::size_t k) {
  if (k == 0) return "No Fault";
  const std::size_t mod100 = k % 100;
  const char* suffix = "th";
  if (mod100 < 11 || mod100 > 13) {
    if (k % 10 == 1) suffix = "st";
    else if (k % 10 == 2) suffix = "nd";
    else if (k % 10 == 3) suffix = "rd";
  }
  return std::to_string(k) + suffix + " Fault";
}

/// Signals x phases; empty cells mark windows that are empty or signals with
/// a zero nominal value.
struct MaeTable {
  std::string title;
  std::vector<std::string> phases;
  std::vector<std::string> signals;
  std::vector<std::vector<std::optional<double>>> values;
};

struct PhaseWindow {
  std::size_t from = 0;
  std::size_t to = 0;
};

/// The last `mae_window` seconds of each fault phase.
inline std::vector<PhaseWindow> phase_windows(const std::vector<std::size_t>& starts, std::size_t steps, double window,
                                              double dt) {
  std::vector<PhaseWindow> out;
  const std::size_t w = std::max<std::size_t>(1, seconds_to_steps(window, dt));
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const std::size_t end = k + 1 < starts.size() ? starts[k + 1] : steps;
    out.push_back({std::max(starts[k], end > w ? end - w : 0), end});
  }
  return out;
}

/// MAE% of `est` against `truth` per component and phase. The nominal value
/// of a signal is its mean absolute truth over the first phase.
inline MaeTable mae_table(const std::string& title, const std::string& prefix, const std::vector<Vector>& est,
                          const std::vector<Vector>& truth, const std::vector<PhaseWindow>& windows) {
  MaeTable t;
  t.title = title;
  for (std::size_t k = 0; k < windows.size(); ++k) t.phases.push_back(ordinal_phase(k));
  if (truth.empty()) return t;
  const Eigen::Index n = truth.front().size();
  const std::size_t first_end = windows.empty() ? truth.size() : std::max<std::size_t>(1, windows.front().to);
  for (Eigen::Index i = 0; i < n; ++i) {
    t.signals.push_back(prefix + std::to_string(i + 1));
    std::vector<double> e, tr;
    for (std::size_t s = 0; s < truth.size(); ++s) {
      e.push_back(est[s](i));
      tr.push_back(truth[s](i));
    }
    double nominal = 0.0;
    for (std::size_t s = 0; s < std::min(first_end, tr.size()); ++s) nominal += std::abs(tr[s]);
    nominal /= static_cast<double>(std::min(first_end, tr.size()));
    std::vector<std::optional<double>> row;
    for (const auto& w : windows) {
      if (nominal < 1e-12 || w.from >= w.to || w.to > tr.size()) {
        row.push_back(std::nullopt);
        continue;
      }
      row.push_back(diagnosis::mae_percent(e, tr, nominal, w.from, w.to));
    }
    t.values.push_back(std::move(row));
  }
  return t;
}

struct DiagnosisResult {
  diagnosis::ThresholdBand band;
  std::vector<diagnosis::ComponentDecision> decisions;
};

struct ScenarioReport {
  RunConfig config;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t particles = 0;
  Problem problem;
  Trajectory truth;
  EstimationTrajectory estimate;
  ResidualSeries residuals;
  std::optional<DiagnosisResult> diagnosis;
  std::vector<MaeTable> tables;  // parameters, states, outputs
  double seconds = 0.0;
};

inline std::vector<MaeTable> mae_tables(const Problem& p, const Trajectory& truth, const EstimationTrajectory& e,
                                        const RunConfig& c) {
  const auto windows = phase_windows(p.phase_starts, e.rows.size(), c.diagnosis.mae_window, c.dt);
  std::vector<Vector> th_e, th_t, x_e, x_t, y_e, y_t;
  for (std::size_t k = 0; k < e.rows.size(); ++k) {
    th_e.push_back(e.rows[k].theta);
    th_t.push_back(truth.thetas[k]);
    x_e.push_back(e.rows[k].state);
    x_t.push_back(truth.states[k + 1]);
    y_e.push_back(e.rows[k].output);
    y_t.push_back(p.model.observe(truth.states[k + 1], truth.thetas[k]));
  }
  return {mae_table("parameter MAE%", "theta_", th_e, th_t, windows),
          mae_table("state MAE%", "x_", x_e, x_t, windows), mae_table("output MAE%", "y_", y_e, y_t, windows)};
}

/// Simulates the configured scenario, estimates it and, when a band is
/// given, diagnoses the residuals from the end of the baseline window on.
inline ScenarioReport run_scenario(const RunConfig& c, const std::optional<diagnosis::ThresholdBand>& band = {},
                                   std::optional<std::string> method = {}) {
  ScenarioReport r;
  r.config = c;
  r.method = method.value_or(c.estimator);
  r.seed = c.seed;
  const auto sc = to_fault_scenario(c.scenario);
  r.problem = build_problem(c, sc);
  r.truth = simulate(r.problem.model, r.problem.x0, r.problem.theta_truth, r.problem.steps, c.seed);
  EstimatorRun e = run_estimator(r.method, c, r.problem, r.truth.outputs, c.seed);
  r.estimate = std::move(e.trajectory);
  r.particles = e.particles;
  r.seconds = e.seconds;
  r.residuals = residual_series(r.estimate, c);
  if (band) {
    const auto start = std::min(seconds_to_steps(c.diagnosis.baseline_to, c.dt), r.residuals.residuals.size());
    r.diagnosis = DiagnosisResult{*band, diagnosis::decide(r.residuals.residuals, *band, decision_config(c, start))};
  }
  r.tables = mae_tables(r.problem, r.truth, r.estimate, c);
  return r;
}

/// Order in which components were flagged, by detection step then index.
inline std::vector<std::size_t> detection_order(const std::vector<diagnosis::ComponentDecision>& d) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i].detected) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return *d[a].t_detect < *d[b].t_detect; });
  return idx;
}

}  // namespace dpf::harness
