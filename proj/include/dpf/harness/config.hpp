#pragma once

// Run configuration: JSON schema, named presets and validation.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpf/baselines/bayesian_ks.hpp"
#include "dpf/baselines/complexity.hpp"
#include "dpf/baselines/rml_spsa.hpp"
#include "dpf/diagnosis.hpp"
#include "dpf/dual.hpp"
#include "dpf/gas_turbine.hpp"

namespace dpf::harness {

using json = nlohmann::json;

struct EventConfig {
  double start = 0.0;
  std::string component = "eta_C";
  std::string profile = "step";
  double magnitude = 0.0;
  double ramp_end = 0.0;
};

struct ScenarioConfig {
  std::string name = "healthy";
  std::vector<EventConfig> events;
  double duration = 0.0;  // seconds; 0 uses the preset duration
  double fuel_step_time = 1.0;
  double fuel_step = -0.02;
};

struct DualSection {
  double shrinkage = 0.93;
  double gamma = 0.9;
  double gamma_limit = 0.9;
  double gamma_decay = 0.0;
  double projection_factor = 0.5;
  double evolution_var = 1e-4;
  std::size_t pe_window = 10;
  std::string predictor = "one_step";
  std::string kernel_cov = "initial";
  double cov_floor = 1e-12;
  std::string jacobian = "finite_difference";
  double fd_step = 1e-5;
  double pmax_gamma0 = 0.9;
  double emax_var = 0.0;  // 0 disables the shrinkage upper-bound check
};

struct RmlSection {
  double gain = 0.05;
  double perturbation = 0.01;
  double max_step = 1e-3;
};

struct BayesianSection {
  double shrinkage = 0.93;
  std::string kernel_cov = "running";
};

struct DiagnosisSection {
  double coverage = 0.99;
  std::size_t persistence = 5;
  double severity_window = 1.0;  // seconds
  double baseline_from = 1.0;    // seconds
  double baseline_to = 3.0;      // seconds
  double min_half_width = 1e-4;
  double mae_window = 2.0;       // seconds at the end of each phase
};

/// Mixed-fault campaign design: a healthy phase followed by one injection on
/// every component in a seeded random order, each with a seeded random
/// severity.
struct CampaignSection {
  std::size_t runs = 35;
  std::size_t calibration_runs = 25;
  std::size_t workers = 1;
  double healthy_phase = 3.0;  // seconds before the first injection
  double segment = 3.0;        // seconds between injections
  double severity_min = 0.02;
  double severity_max = 0.10;
  std::vector<std::string> methods{"dual", "rml", "bayesian"};
};

struct RunConfig {
  std::string model = "gas_turbine";
  std::string estimator = "dual";
  std::uint64_t seed = 1;
  double dt = 0.01;
  std::size_t particles = 50;
  std::size_t particles_bayesian = 45;
  std::size_t particles_rml = 150;
  std::string budget = "fixed";  // fixed | matched | matched_exact
  double c1 = 10, c2 = 20, c3 = 50;
  std::vector<double> theta_nominal;  // truth before faults; empty means ones
  std::vector<double> theta0_mean;    // estimator prior mean; empty means theta_nominal
  double state_prior_var = 1e-4;      // per-unit state prior variance
  double process_std = 0.0;          // 0 uses the model default
  double measurement_std = 0.0;      // 0 uses the model default
  std::size_t n_reg = 16;
  double bandwidth = 0.0;
  std::string kernel = "gaussian";
  ScenarioConfig scenario;
  DualSection dual;
  RmlSection rml;
  BayesianSection bayesian;
  DiagnosisSection diagnosis;
  CampaignSection campaign;

  std::size_t steps() const {
    return static_cast<std::size_t>(std::llround(scenario.duration / dt));
  }
};

inline void reject_unknown(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!keys.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void from_json(const json& j, EventConfig& e) {
  reject_unknown(j, {"start", "component", "profile", "magnitude", "ramp_end"}, "scenario event");
  read(j, "start", e.start);
  read(j, "component", e.component);
  read(j, "profile", e.profile);
  read(j, "magnitude", e.magnitude);
  read(j, "ramp_end", e.ramp_end);
}

inline void to_json(json& j, const EventConfig& e) {
  j = json{{"start", e.start}, {"component", e.component}, {"profile", e.profile}, {"magnitude", e.magnitude},
           {"ramp_end", e.ramp_end}};
}

inline RunConfig parse_config(const json& j) {
  RunConfig c;
  reject_unknown(j, {"model", "estimator", "seed", "dt", "particles", "particles_bayesian", "particles_rml", "budget",
                     "c1", "c2", "c3", "theta_nominal", "theta0_mean", "state_prior_var", "process_std",
                     "measurement_std", "n_reg", "bandwidth", "kernel", "scenario", "dual", "rml", "bayesian",
                     "diagnosis", "campaign", "preset"},
                 "config");
  read(j, "model", c.model);
  read(j, "estimator", c.estimator);
  read(j, "seed", c.seed);
  read(j, "dt", c.dt);
  read(j, "particles", c.particles);
  read(j, "particles_bayesian", c.particles_bayesian);
  read(j, "particles_rml", c.particles_rml);
  read(j, "budget", c.budget);
  read(j, "c1", c.c1);
  read(j, "c2", c.c2);
  read(j, "c3", c.c3);
  read(j, "theta_nominal", c.theta_nominal);
  read(j, "theta0_mean", c.theta0_mean);
  read(j, "state_prior_var", c.state_prior_var);
  read(j, "process_std", c.process_std);
  read(j, "measurement_std", c.measurement_std);
  read(j, "n_reg", c.n_reg);
  read(j, "bandwidth", c.bandwidth);
  read(j, "kernel", c.kernel);
  if (j.contains("scenario")) {
    const json& s = j.at("scenario");
    reject_unknown(s, {"name", "events", "duration", "fuel_step_time", "fuel_step"}, "scenario");
    read(s, "name", c.scenario.name);
    read(s, "events", c.scenario.events);
    read(s, "duration", c.scenario.duration);
    read(s, "fuel_step_time", c.scenario.fuel_step_time);
    read(s, "fuel_step", c.scenario.fuel_step);
  }
  if (j.contains("dual")) {
    const json& s = j.at("dual");
    reject_unknown(s, {"shrinkage", "gamma", "gamma_limit", "gamma_decay", "projection_factor", "evolution_var",
                       "pe_window", "predictor", "kernel_cov", "cov_floor", "jacobian", "fd_step", "pmax_gamma0",
                       "emax_var"},
                   "dual");
    auto& d = c.dual;
    read(s, "shrinkage", d.shrinkage);
    read(s, "gamma", d.gamma);
    d.gamma_limit = d.gamma;
    read(s, "gamma_limit", d.gamma_limit);
    read(s, "gamma_decay", d.gamma_decay);
    read(s, "projection_factor", d.projection_factor);
    read(s, "evolution_var", d.evolution_var);
    read(s, "pe_window", d.pe_window);
    read(s, "predictor", d.predictor);
    read(s, "kernel_cov", d.kernel_cov);
    read(s, "cov_floor", d.cov_floor);
    read(s, "jacobian", d.jacobian);
    read(s, "fd_step", d.fd_step);
    read(s, "pmax_gamma0", d.pmax_gamma0);
    read(s, "emax_var", d.emax_var);
  }
  if (j.contains("rml")) {
    const json& s = j.at("rml");
    reject_unknown(s, {"gain", "perturbation", "max_step"}, "rml");
    read(s, "gain", c.rml.gain);
    read(s, "perturbation", c.rml.perturbation);
    read(s, "max_step", c.rml.max_step);
  }
  if (j.contains("bayesian")) {
    const json& s = j.at("bayesian");
    reject_unknown(s, {"shrinkage", "kernel_cov"}, "bayesian");
    read(s, "shrinkage", c.bayesian.shrinkage);
    read(s, "kernel_cov", c.bayesian.kernel_cov);
  }
  if (j.contains("diagnosis")) {
    const json& s = j.at("diagnosis");
    reject_unknown(s, {"coverage", "persistence", "severity_window", "baseline_from", "baseline_to", "min_half_width",
                       "mae_window"},
                   "diagnosis");
    auto& d = c.diagnosis;
    read(s, "coverage", d.coverage);
    read(s, "persistence", d.persistence);
    read(s, "severity_window", d.severity_window);
    read(s, "baseline_from", d.baseline_from);
    read(s, "baseline_to", d.baseline_to);
    read(s, "min_half_width", d.min_half_width);
    read(s, "mae_window", d.mae_window);
  }
  if (j.contains("campaign")) {
    const json& s = j.at("campaign");
    reject_unknown(s, {"runs", "calibration_runs", "workers", "healthy_phase", "segment", "severity_min",
                       "severity_max", "methods"},
                   "campaign");
    auto& d = c.campaign;
    read(s, "runs", d.runs);
    read(s, "calibration_runs", d.calibration_runs);
    read(s, "workers", d.workers);
    read(s, "healthy_phase", d.healthy_phase);
    read(s, "segment", d.segment);
    read(s, "severity_min", d.severity_min);
    read(s, "severity_max", d.severity_max);
    read(s, "methods", d.methods);
  }
  return c;
}

inline json config_to_json(const RunConfig& c) {
  const auto& d = c.dual;
  const auto& g = c.diagnosis;
  const auto& p = c.campaign;
  return json{
      {"model", c.model},
      {"estimator", c.estimator},
      {"seed", c.seed},
      {"dt", c.dt},
      {"particles", c.particles},
      {"particles_bayesian", c.particles_bayesian},
      {"particles_rml", c.particles_rml},
      {"budget", c.budget},
      {"c1", c.c1},
      {"c2", c.c2},
      {"c3", c.c3},
      {"theta_nominal", c.theta_nominal},
      {"theta0_mean", c.theta0_mean},
      {"state_prior_var", c.state_prior_var},
      {"process_std", c.process_std},
      {"measurement_std", c.measurement_std},
      {"n_reg", c.n_reg},
      {"bandwidth", c.bandwidth},
      {"kernel", c.kernel},
      {"scenario",
       {{"name", c.scenario.name},
        {"events", c.scenario.events},
        {"duration", c.scenario.duration},
        {"fuel_step_time", c.scenario.fuel_step_time},
        {"fuel_step", c.scenario.fuel_step}}},
      {"dual",
       {{"shrinkage", d.shrinkage},
        {"gamma", d.gamma},
        {"gamma_limit", d.gamma_limit},
        {"gamma_decay", d.gamma_decay},
        {"projection_factor", d.projection_factor},
        {"evolution_var", d.evolution_var},
        {"pe_window", d.pe_window},
        {"predictor", d.predictor},
        {"kernel_cov", d.kernel_cov},
        {"cov_floor", d.cov_floor},
        {"jacobian", d.jacobian},
        {"fd_step", d.fd_step},
        {"pmax_gamma0", d.pmax_gamma0},
        {"emax_var", d.emax_var}}},
      {"rml", {{"gain", c.rml.gain}, {"perturbation", c.rml.perturbation}, {"max_step", c.rml.max_step}}},
      {"bayesian", {{"shrinkage", c.bayesian.shrinkage}, {"kernel_cov", c.bayesian.kernel_cov}}},
      {"diagnosis",
       {{"coverage", g.coverage},
        {"persistence", g.persistence},
        {"severity_window", g.severity_window},
        {"baseline_from", g.baseline_from},
        {"baseline_to", g.baseline_to},
        {"min_half_width", g.min_half_width},
        {"mae_window", g.mae_window}}},
      {"campaign",
       {{"runs", p.runs},
        {"calibration_runs", p.calibration_runs},
        {"workers", p.workers},
        {"healthy_phase", p.healthy_phase},
        {"segment", p.segment},
        {"severity_min", p.severity_min},
        {"severity_max", p.severity_max},
        {"methods", p.methods}}},
  };
}

inline json scenario_preset_json(const std::string& name) {
  auto events = [](const gas_turbine::FaultScenario& sc) {
    json ev = json::array();
    for (const auto& e : sc.events)
      ev.push_back(EventConfig{e.start, gas_turbine::component_name(e.component),
                               e.profile == gas_turbine::Profile::step ? "step" : "drift", e.magnitude, e.ramp_end});
    return json{{"name", sc.name}, {"events", ev}, {"duration", sc.duration}};
  };
  if (name == "scenario_I_concurrent") return events(gas_turbine::scenario_concurrent());
  if (name == "scenario_II_simultaneous") return events(gas_turbine::scenario_simultaneous());
  throw ConfigError("unknown scenario preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
  return {"paper_defaults", "scenario_I_concurrent", "scenario_II_simultaneous", "synthetic_campaign",
          "synthetic_scalar", "healthy"};
}

/// Preset as a JSON patch over the built-in defaults.
inline json preset_json(const std::string& name) {
  const json defaults = {{"model", "gas_turbine"},
                      {"dt", 0.01},
                      {"particles", 50},
                      {"particles_bayesian", 45},
                      {"particles_rml", 150},
                      {"dual", {{"shrinkage", 0.93}, {"gamma", 0.9}}},
                      {"rml", {{"gain", 0.05}}},
                      {"bayesian", {{"shrinkage", 0.93}}},
                      {"diagnosis", {{"baseline_from", 1.0}, {"baseline_to", 3.0}}}};
  if (name == "paper_defaults") {
    json j = defaults;
    j["scenario"] = scenario_preset_json("scenario_I_concurrent");
    return j;
  }
  if (name == "scenario_I_concurrent" || name == "scenario_II_simultaneous") {
    json j = defaults;
    j["scenario"] = scenario_preset_json(name);
    return j;
  }
  if (name == "healthy") {
    json j = defaults;
    j["scenario"] = {{"name", "healthy"}, {"events", json::array()}, {"duration", 10.0}};
    return j;
  }
  if (name == "synthetic_campaign") {
    return {{"model", "synthetic_health4"},
            {"dt", 0.01},
            {"particles", 50},
            {"budget", "matched"},
            {"dual", {{"predictor", "posterior_state"}, {"kernel_cov", "running"}, {"evolution_var", 1e-4}}},
            {"bayesian", {{"kernel_cov", "running"}}},
            {"state_prior_var", 1e-2},
            {"diagnosis", {{"baseline_from", 1.0}, {"baseline_to", 3.0}}},
            {"scenario", {{"name", "healthy"}, {"events", json::array()}, {"duration", 15.0}}},
            {"campaign", {{"runs", 35}, {"calibration_runs", 25}, {"healthy_phase", 3.0}, {"segment", 3.0}}}};
  }
  if (name == "synthetic_scalar") {
    return {{"model", "synthetic_scalar"},
            {"dt", 1.0},
            {"particles", 50},
            {"theta_nominal", {0.8}},
            {"theta0_mean", {0.7}},
            {"state_prior_var", 1.0},
            {"dual", {{"predictor", "one_step"}, {"kernel_cov", "initial"}, {"evolution_var", 0.004}}},
            {"diagnosis", {{"baseline_from", 100.0}, {"baseline_to", 400.0}}},
            {"scenario",
             {{"name", "scalar_step"},
              {"events", {{{"start", 400.0}, {"component", "eta_C"}, {"profile", "step"}, {"magnitude", 0.05}}}},
              {"duration", 700.0}}}};
  }
  throw ConfigError("unknown preset '" + name + "'");
}

inline void check_config(const RunConfig& c) {
  static const std::set<std::string> models{"gas_turbine", "synthetic_health4", "synthetic_scalar", "linear_gaussian"};
  static const std::set<std::string> estimators{"dual", "bayesian", "rml"};
  if (!models.count(c.model)) throw ConfigError("unknown model '" + c.model + "'");
  if (!estimators.count(c.estimator)) throw ConfigError("unknown estimator '" + c.estimator + "'");
  if (!(c.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(c.scenario.duration > 0.0)) throw ConfigError("duration must be positive");
  if (c.steps() < 1) throw ConfigError("duration is shorter than one step");
  if (c.particles < 2 || c.particles_bayesian < 2 || c.particles_rml < 2)
    throw ConfigError("particle counts must be at least 2");
  if (c.budget != "fixed" && c.budget != "matched" && c.budget != "matched_exact")
    throw ConfigError("budget must be fixed, matched or matched_exact");
  if (c.dual.predictor != "one_step" && c.dual.predictor != "posterior_state")
    throw ConfigError("dual.predictor must be one_step or posterior_state");
  for (const auto& k : {c.dual.kernel_cov, c.bayesian.kernel_cov})
    if (k != "running" && k != "initial") throw ConfigError("kernel_cov must be running or initial");
  if (c.dual.jacobian != "finite_difference" && c.dual.jacobian != "analytic")
    throw ConfigError("dual.jacobian must be finite_difference or analytic");
  if (c.kernel != "gaussian" && c.kernel != "epanechnikov") throw ConfigError("kernel must be gaussian or epanechnikov");
  if (!(c.dual.evolution_var > 0.0)) throw ConfigError("dual.evolution_var must be positive");
  if (!(c.state_prior_var >= 0.0)) throw ConfigError("state_prior_var must be nonnegative");
  if (!(c.diagnosis.baseline_from < c.diagnosis.baseline_to)) throw ConfigError("baseline window is empty");
  if (c.campaign.runs < 1) throw ConfigError("campaign.runs must be at least 1");
  if (c.campaign.workers < 1) throw ConfigError("campaign.workers must be at least 1");
  if (!(c.campaign.severity_min >= 0.0 && c.campaign.severity_min <= c.campaign.severity_max &&
        c.campaign.severity_max <= 0.5))
    throw ConfigError("campaign severities must satisfy 0 <= min <= max <= 0.5");
  for (const auto& e : c.scenario.events) {
    gas_turbine::component_from_name(e.component);
    if (e.profile != "step" && e.profile != "drift") throw ConfigError("event profile must be step or drift");
  }
  for (const auto& m : c.campaign.methods)
    if (!estimators.count(m)) throw ConfigError("unknown campaign method '" + m + "'");
}

/// Builds a config from defaults, an optional preset, an optional config
/// document and command-line overrides, in that order. A "preset" key inside
/// the document is applied before the document itself.
inline RunConfig build_config(const std::string& preset, const json& document, const json& overrides) {
  json merged = json::object();
  std::string base = preset;
  if (base.empty() && document.contains("preset")) base = document.at("preset").get<std::string>();
  if (!base.empty()) merged.merge_patch(preset_json(base));
  if (!document.is_null()) merged.merge_patch(document);
  if (!overrides.is_null()) merged.merge_patch(overrides);
  merged.erase("preset");
  RunConfig c = parse_config(merged);
  if (c.scenario.duration == 0.0) {
    if (c.scenario.name == "scenario_I_concurrent") c.scenario.duration = gas_turbine::scenario_concurrent().duration;
    else if (c.scenario.name == "scenario_II_simultaneous")
      c.scenario.duration = gas_turbine::scenario_simultaneous().duration;
  }
  check_config(c);
  return c;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace dpf::harness
