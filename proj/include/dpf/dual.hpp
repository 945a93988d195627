#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "dpf/csv.hpp"
#include "dpf/param_filter.hpp"
#include "dpf/state_filter.hpp"

namespace dpf {

struct GaussianPrior {
  Vector mean;
  Matrix cov;
};

struct DualConfig {
  StateFilterConfig state;
  ParamFilterConfig param;
};

struct DualHistoryRow {
  std::size_t t = 0;
  Vector state;
  Vector theta;
  Vector output;
  double ess_state = 0.0;
  double ess_param = 0.0;
  double averaged_cost = 0.0;
};

struct EstimationTrajectory {
  std::vector<DualHistoryRow> rows;
  std::size_t domain_violations = 0;
  std::size_t particle_checks = 0;
  std::size_t projection_flags = 0;
};

/// Two concurrent particle filters: the state filter runs on the previous
/// parameter estimate, then the parameter filter runs on the fresh state
/// estimate.
class DualEstimator {
public:
  DualEstimator(const ModelSpec& model, const GaussianPrior& x0, const GaussianPrior& theta0, DualConfig cfg,
                std::uint64_t seed)
      : model_(model),
        state_rng_(make_rng(seed, 0x57a7e)),
        param_rng_(make_rng(seed, 0x9a7a)),
        state_(init_state(x0, cfg.state, seed)),
        param_(init_param(model, theta0, cfg.param, seed)) {
    model_.validate();
    x_prev_ = state_.estimate();
  }

  DualHistoryRow step(const Vector& y) {
    if (y.size() != model_.n_y) throw ConfigError("observation has wrong dimension");
    const std::size_t k = state_.steps();
    StateStepResult s;
    try {
      s = state_.step(param_.estimate(), y, model_, state_rng_);
    } catch (const FilterDivergence& e) {
      throw FilterDivergence(e.particle(), e.detail(), "state filter");
    } catch (const DegenerateWeights& e) {
      throw DegenerateWeights(e.what(), "state filter");
    }
    StateContext ctx{s.estimate, x_prev_, k, s.predicted_output_cov};
    ParamStepResult p;
    try {
      p = param_.step(ctx, y, model_, param_rng_);
    } catch (const FilterDivergence& e) {
      throw FilterDivergence(e.particle(), e.detail(), "parameter filter");
    } catch (const DegenerateWeights& e) {
      throw DegenerateWeights(e.what(), "parameter filter");
    }
    x_prev_ = s.estimate;
    projection_flags_ += p.projection_flags;
    DualHistoryRow row{k + 1, s.estimate, p.estimate, p.output_estimate, s.ess, p.ess, p.averaged_cost};
    return row;
  }

  EstimationTrajectory run(const std::vector<Vector>& observations) {
    EstimationTrajectory out;
    out.rows.reserve(observations.size());
    for (const Vector& y : observations) out.rows.push_back(step(y));
    out.domain_violations = param_.domain_violations();
    out.particle_checks = param_.particle_checks();
    out.projection_flags = projection_flags_;
    return out;
  }

  const StateFilter& state_filter() const { return state_; }
  const ParamFilter& param_filter() const { return param_; }
  const ModelSpec& model() const { return model_; }

private:
  static StateFilter init_state(const GaussianPrior& x0, const StateFilterConfig& cfg, std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x1a17);
    return StateFilter::from_gaussian(x0.mean, x0.cov, cfg, rng);
  }
  static ParamFilter init_param(const ModelSpec& model, const GaussianPrior& theta0, const ParamFilterConfig& cfg,
                                std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x1a18);
    return ParamFilter::from_gaussian(theta0.mean, theta0.cov, cfg, model.param_domain, rng);
  }

  ModelSpec model_;
  Rng state_rng_;
  Rng param_rng_;
  StateFilter state_;
  ParamFilter param_;
  Vector x_prev_;
  std::size_t projection_flags_ = 0;
};

inline void write_estimation_csv(std::ostream& os, const EstimationTrajectory& traj) {
  if (traj.rows.empty()) {
    os << "t\n";
    return;
  }
  const auto& r0 = traj.rows.front();
  std::vector<std::string> header{"t"};
  for (auto& h : csv::indexed("xhat_", r0.state.size())) header.push_back(h);
  for (auto& h : csv::indexed("thetahat_", r0.theta.size())) header.push_back(h);
  for (auto& h : csv::indexed("yhat_", r0.output.size())) header.push_back(h);
  header.push_back("ess_state");
  header.push_back("ess_param");
  csv::write_row(os, header);
  for (const auto& r : traj.rows) {
    std::vector<std::string> cells{std::to_string(r.t)};
    for (Eigen::Index i = 0; i < r.state.size(); ++i) cells.push_back(csv::fmt(r.state(i)));
    for (Eigen::Index i = 0; i < r.theta.size(); ++i) cells.push_back(csv::fmt(r.theta(i)));
    for (Eigen::Index i = 0; i < r.output.size(); ++i) cells.push_back(csv::fmt(r.output(i)));
    cells.push_back(csv::fmt(r.ess_state));
    cells.push_back(csv::fmt(r.ess_param));
    csv::write_row(os, cells);
  }
}

}  // namespace dpf
