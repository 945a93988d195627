#pragma once

// Report serialization: per-run directories, campaign roots, tables and the
// machine-readable error document.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dpf/csv.hpp"
#include "dpf/harness/campaign.hpp"

namespace dpf::harness {

namespace fs = std::filesystem;

inline json to_json_vec(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json_mat(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json_vec(m.row(i).transpose()));
  return a;
}

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json band_json(const diagnosis::ThresholdBand& b) {
  return {{"lower", to_json_vec(b.lower)}, {"upper", to_json_vec(b.upper)}};
}

inline diagnosis::ThresholdBand band_from_json(const json& j) {
  reject_unknown(j, {"lower", "upper"}, "threshold band");
  try {
    diagnosis::ThresholdBand b{to_vector(j.at("lower").get<std::vector<double>>()),
                               to_vector(j.at("upper").get<std::vector<double>>())};
    if (b.lower.size() != b.upper.size() || b.lower.size() == 0) throw ConfigError("band bounds differ in size");
    for (Eigen::Index k = 0; k < b.lower.size(); ++k)
      if (!(b.lower(k) <= b.upper(k))) throw ConfigError("band lower bound exceeds upper bound");
    return b;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed threshold band: ") + e.what());
  }
}

/// Bands per method from a thresholds document written by `calibrate`.
inline std::map<std::string, diagnosis::ThresholdBand> bands_from_json(const json& j) {
  if (!j.contains("bands") || !j.at("bands").is_object()) throw ConfigError("thresholds file has no 'bands' object");
  std::map<std::string, diagnosis::ThresholdBand> out;
  for (auto it = j.at("bands").begin(); it != j.at("bands").end(); ++it) out[it.key()] = band_from_json(it.value());
  return out;
}

inline json decisions_json(const std::vector<diagnosis::ComponentDecision>& d) {
  json a = json::array();
  for (std::size_t i = 0; i < d.size(); ++i)
    a.push_back({{"component", i < 4 ? gas_turbine::component_name(static_cast<gas_turbine::Component>(i))
                                     : "theta_" + std::to_string(i + 1)},
                 {"detected", d[i].detected},
                 {"t_detect", d[i].t_detect ? json(*d[i].t_detect) : json(nullptr)},
                 {"severity", d[i].severity},
                 {"peak_excursion", d[i].peak_excursion}});
  return a;
}

inline json confusion_json(const diagnosis::ConfusionMatrix& m) {
  json a = json::array();
  for (const auto& row : m.c) a.push_back(row);
  return a;
}

inline json metrics_json(const diagnosis::ConfusionMetrics& m) {
  json p = json::array();
  for (const auto& v : m.precision) p.push_back(opt_json(v));
  return {{"accuracy", m.accuracy}, {"precision", p}, {"false_positive", opt_json(m.false_positive)}};
}

inline json table_json(const MaeTable& t) {
  json rows = json::array();
  for (std::size_t s = 0; s < t.signals.size(); ++s) {
    json cells = json::array();
    for (const auto& v : t.values[s]) cells.push_back(opt_json(v));
    rows.push_back({{"signal", t.signals[s]}, {"values", cells}});
  }
  return {{"title", t.title}, {"phases", t.phases}, {"rows", rows}};
}

inline void write_table_csv(std::ostream& os, const MaeTable& t) {
  std::vector<std::string> header{"signal"};
  header.insert(header.end(), t.phases.begin(), t.phases.end());
  csv::write_row(os, header);
  for (std::size_t s = 0; s < t.signals.size(); ++s) {
    std::vector<std::string> row{t.signals[s]};
    for (const auto& v : t.values[s]) row.push_back(v ? csv::fmt(*v) : "");
    csv::write_row(os, row);
  }
}

/// Fixed-width text rendering with two decimals.
inline std::string format_table(const MaeTable& t) {
  std::ostringstream os;
  std::size_t w0 = 8;
  for (const auto& s : t.signals) w0 = std::max(w0, s.size() + 2);
  std::size_t w = 12;
  for (const auto& p : t.phases) w = std::max(w, p.size() + 2);
  os << t.title << '\n' << std::left << std::setw(static_cast<int>(w0)) << "signal";
  for (const auto& p : t.phases) os << std::right << std::setw(static_cast<int>(w)) << p;
  os << '\n';
  for (std::size_t s = 0; s < t.signals.size(); ++s) {
    os << std::left << std::setw(static_cast<int>(w0)) << t.signals[s];
    for (const auto& v : t.values[s]) {
      std::ostringstream cell;
      if (v) cell << std::fixed << std::setprecision(2) << *v;
      else cell << "-";
      os << std::right << std::setw(static_cast<int>(w)) << cell.str();
    }
    os << '\n';
  }
  return os.str();
}

inline std::string table_stem(const MaeTable& t) {
  const auto pos = t.title.find(' ');
  return "mae_" + (pos == std::string::npos ? t.title : t.title.substr(0, pos));
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << s;
}

inline void write_json_file(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline void write_tables(const fs::path& dir, const std::vector<MaeTable>& tables) {
  fs::create_directories(dir);
  for (const auto& t : tables) {
    std::ostringstream csv_out;
    write_table_csv(csv_out, t);
    write_text(dir / (table_stem(t) + ".csv"), csv_out.str());
    write_text(dir / (table_stem(t) + ".txt"), format_table(t));
  }
}

/// Truth and estimate side by side; row k holds the estimate after y_{k+1}.
inline void write_run_trajectory_csv(std::ostream& os, const Trajectory& truth, const EstimationTrajectory& e) {
  const long nx = truth.states.front().size();
  const long nt = truth.thetas.empty() ? 0 : truth.thetas.front().size();
  const long ny = truth.outputs.empty() ? 0 : truth.outputs.front().size();
  std::vector<std::string> header{"t"};
  for (const auto& group : {csv::indexed("x_", nx), csv::indexed("theta_", nt), csv::indexed("y_", ny),
                            csv::indexed("xhat_", nx), csv::indexed("thetahat_", nt), csv::indexed("yhat_", ny)})
    header.insert(header.end(), group.begin(), group.end());
  header.push_back("ess_state");
  header.push_back("ess_param");
  csv::write_row(os, header);
  for (std::size_t k = 0; k < e.rows.size(); ++k) {
    const auto& r = e.rows[k];
    std::vector<std::string> row{std::to_string(k + 1)};
    auto push = [&](const Vector& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(csv::fmt(v(i)));
    };
    push(truth.states[k + 1]);
    push(truth.thetas[k]);
    push(truth.outputs[k]);
    push(r.state);
    push(r.theta);
    push(r.output);
    row.push_back(csv::fmt(r.ess_state));
    row.push_back(csv::fmt(r.ess_param));
    csv::write_row(os, row);
  }
}

inline void write_residuals_csv(std::ostream& os, const std::vector<Vector>& residuals,
                                const std::optional<diagnosis::ThresholdBand>& band) {
  const long n = residuals.empty() ? 0 : residuals.front().size();
  std::vector<std::string> header{"t"};
  for (const auto& h : csv::indexed("r_", n)) header.push_back(h);
  if (band) {
    for (const auto& h : csv::indexed("lower_", n)) header.push_back(h);
    for (const auto& h : csv::indexed("upper_", n)) header.push_back(h);
  }
  csv::write_row(os, header);
  for (std::size_t k = 0; k < residuals.size(); ++k) {
    std::vector<std::string> row{std::to_string(k + 1)};
    for (long i = 0; i < n; ++i) row.push_back(csv::fmt(residuals[k](i)));
    if (band) {
      for (long i = 0; i < n; ++i) row.push_back(csv::fmt(band->lower(i)));
      for (long i = 0; i < n; ++i) row.push_back(csv::fmt(band->upper(i)));
    }
    csv::write_row(os, row);
  }
}

inline json scenario_report_json(const ScenarioReport& r) {
  json j{{"config", config_to_json(r.config)},
         {"estimator", r.method},
         {"seed", r.seed},
         {"particles", r.particles},
         {"steps", r.estimate.rows.size()},
         {"baseline",
          {{"theta0", to_json_vec(r.residuals.baseline.theta0)},
           {"covariance", to_json_mat(r.residuals.baseline.fit_cov)},
           {"window", r.residuals.baseline.window},
           {"short_window", r.residuals.baseline.short_window}}},
         {"domain",
          {{"particle_checks", r.estimate.particle_checks},
           {"violations", r.estimate.domain_violations},
           {"projection_flags", r.estimate.projection_flags}}},
         {"final_theta", to_json_vec(r.estimate.rows.back().theta)}};
  if (r.diagnosis) {
    j["bands"] = band_json(r.diagnosis->band);
    j["decisions"] = decisions_json(r.diagnosis->decisions);
    json order = json::array();
    for (auto i : detection_order(r.diagnosis->decisions))
      order.push_back(i < 4 ? gas_turbine::component_name(static_cast<gas_turbine::Component>(i))
                            : "theta_" + std::to_string(i + 1));
    j["detection_order"] = order;
  }
  json tables = json::array();
  for (const auto& t : r.tables) tables.push_back(table_json(t));
  j["mae_tables"] = tables;
  return j;
}

/// trajectory.csv, residuals.csv, report.json and tables/ under `dir`.
inline void write_scenario(const fs::path& dir, const ScenarioReport& r) {
  fs::create_directories(dir);
  std::ostringstream traj, res;
  write_run_trajectory_csv(traj, r.truth, r.estimate);
  write_residuals_csv(res, r.residuals.residuals,
                      r.diagnosis ? std::optional<diagnosis::ThresholdBand>(r.diagnosis->band) : std::nullopt);
  write_text(dir / "trajectory.csv", traj.str());
  write_text(dir / "residuals.csv", res.str());
  write_json_file(dir / "report.json", scenario_report_json(r));
  write_tables(dir / "tables", r.tables);
}

inline json failures_json(const std::vector<RunFailure>& f) {
  json a = json::array();
  for (const auto& x : f) a.push_back({{"run", x.run}, {"method", x.method}, {"kind", x.kind}, {"message", x.message}});
  return a;
}

inline json calibration_json(const Calibration& c, const RunConfig& cfg) {
  json bands = json::object();
  for (const auto& [m, b] : c.bands) bands[m] = band_json(b);
  return {{"config", config_to_json(cfg)},
          {"bands", bands},
          {"runs", c.used_runs},
          {"failures", failures_json(c.failures)},
          {"domain", {{"particle_checks", c.particle_checks}, {"violations", c.domain_violations}}}};
}

inline json complexity_json(const RunConfig& c, const ModelSpec& m) {
  const complexity::CostModel cm{static_cast<double>(m.n_x), static_cast<double>(m.n_theta),
                                 static_cast<double>(m.n_y), c.c1, c.c2, c.c3, static_cast<double>(c.particles)};
  const Budget b = particle_budget(c, m);
  auto at = [&](double n) {
    complexity::CostModel x = cm;
    x.N = n;
    return x;
  };
  json methods = json::object();
  methods["dual"] = {{"particles", b.dual}, {"ef", complexity::ef_complexity(complexity::Method::dual, at(b.dual))}};
  methods["bayesian"] = {{"particles", b.bayesian},
                         {"ef", complexity::ef_complexity(complexity::Method::bayesian, at(b.bayesian))}};
  methods["rml"] = {{"particles", b.rml}, {"ef", complexity::ef_complexity(complexity::Method::rml, at(b.rml))}};
  json budgets = json::object();
  for (auto ref : {complexity::Method::bayesian, complexity::Method::rml}) {
    const std::string name = complexity::method_name(ref);
    try {
      budgets[name] = {{"matched", complexity::match_particle_budget(ref, static_cast<double>(c.particles), cm)},
                       {"matched_exact",
                        complexity::match_particle_budget_exact(ref, static_cast<double>(c.particles), cm)},
                       {"factor", complexity::budget_factor(ref, cm)}};
    } catch (const Error& e) {
      budgets[name] = {{"error", e.kind()}, {"message", e.what()}};
    }
  }
  json verbatim = json::object();
  try {
    verbatim["dual_from_bayesian"] = complexity::dual_budget_from_bayesian(static_cast<double>(b.bayesian), cm);
  } catch (const Error& e) {
    verbatim["dual_from_bayesian"] = {{"error", e.kind()}, {"message", e.what()}};
  }
  try {
    verbatim["dual_from_rml"] = complexity::dual_budget_from_rml(static_cast<double>(b.rml), cm);
  } catch (const Error& e) {
    verbatim["dual_from_rml"] = {{"error", e.kind()}, {"message", e.what()}};
  }
  return {{"dims", {{"n_x", m.n_x}, {"n_theta", m.n_theta}, {"n_y", m.n_y}}},
          {"costs", {{"c1", c.c1}, {"c2", c.c2}, {"c3", c.c3}}},
          {"budget_mode", c.budget},
          {"methods", methods},
          {"budget_matching", budgets},
          {"verbatim_budget_equations", verbatim}};
}

inline void write_confusion_csv(std::ostream& os, const CampaignReport& rep) {
  static const char* labels[] = {"eta_C", "m_C", "eta_T", "m_T", "no_fault"};
  csv::write_row(os, {"method", "actual", "eta_C", "m_C", "eta_T", "m_T", "no_fault"});
  for (const auto& s : rep.summaries)
    for (std::size_t i = 0; i < diagnosis::kCategories; ++i) {
      std::vector<std::string> row{s.method, labels[i]};
      for (long v : s.confusion.c[i]) row.push_back(std::to_string(v));
      csv::write_row(os, row);
    }
}

inline json campaign_json(const CampaignReport& rep, const std::vector<OrderingConfidence>& ordering) {
  json methods = json::object();
  for (std::size_t m = 0; m < rep.summaries.size(); ++m) {
    const auto& s = rep.summaries[m];
    json runs = json::array();
    for (const auto& run : rep.runs) {
      if (run.methods.size() <= m) continue;
      const auto& mr = run.methods[m];
      runs.push_back({{"run", run.index},
                      {"ok", mr.ok},
                      {"confusion", mr.ok ? confusion_json(mr.confusion) : json(nullptr)},
                      {"final_theta", mr.ok ? to_json_vec(mr.estimate.rows.back().theta) : json(nullptr)}});
    }
    json tables = json::array();
    for (const auto& t : s.median_tables) tables.push_back(table_json(t));
    methods[s.method] = {{"particles", s.particles},
                         {"completed_runs", s.completed},
                         {"confusion", confusion_json(s.confusion)},
                         {"metrics", s.metrics ? metrics_json(*s.metrics) : json(nullptr)},
                         {"median_mae_tables", tables},
                         {"runs", runs}};
  }
  json design = json::array();
  for (const auto& run : rep.runs) {
    json inj = json::array();
    for (const auto& e : run.injections)
      inj.push_back({{"component", gas_turbine::component_name(static_cast<gas_turbine::Component>(e.component))},
                     {"step", e.step},
                     {"severity", e.severity}});
    design.push_back({{"run", run.index}, {"seed", run.seed}, {"injections", inj}});
  }
  json order = json::array();
  for (const auto& o : ordering)
    order.push_back({{"better", o.better}, {"worse", o.worse}, {"metric", o.metric}, {"confidence", o.confidence}});
  json bands = json::object();
  for (const auto& [m, b] : rep.calibration.bands) bands[m] = band_json(b);
  const Problem p = build_problem(rep.config, to_fault_scenario(campaign_scenario(rep.config, {})));
  return {{"config", config_to_json(rep.config)},
          {"design", design},
          {"bands", bands},
          {"calibration_runs", rep.calibration.used_runs},
          {"methods", methods},
          {"ordering", order},
          {"complexity", complexity_json(rep.config, p.model)},
          {"domain", {{"particle_checks", rep.particle_checks}, {"violations", rep.domain_violations}}},
          {"failures", failures_json(rep.failures)}};
}

/// aggregate.json, confusion.csv, tables/<method>/ and per-run directories
/// runs/<method>/run_XXX/.
inline void write_campaign(const fs::path& dir, const CampaignReport& rep,
                           const std::vector<OrderingConfidence>& ordering) {
  fs::create_directories(dir);
  write_json_file(dir / "aggregate.json", campaign_json(rep, ordering));
  std::ostringstream conf;
  write_confusion_csv(conf, rep);
  write_text(dir / "confusion.csv", conf.str());
  for (const auto& s : rep.summaries) write_tables(dir / "tables" / s.method, s.median_tables);
  for (std::size_t m = 0; m < rep.methods.size(); ++m)
    for (const auto& run : rep.runs) {
      if (run.methods.size() <= m || !run.methods[m].ok) continue;
      std::ostringstream name;
      name << "run_" << std::setw(3) << std::setfill('0') << run.index;
      const fs::path rd = dir / "runs" / rep.methods[m] / name.str();
      fs::create_directories(rd);
      std::ostringstream traj, res;
      write_run_trajectory_csv(traj, run.truth, run.methods[m].estimate);
      write_residuals_csv(res, run.methods[m].residuals, rep.calibration.bands.at(rep.methods[m]));
      write_text(rd / "trajectory.csv", traj.str());
      write_text(rd / "residuals.csv", res.str());
    }
}

inline json error_json(const std::exception& e) {
  const auto* de = dynamic_cast<const Error*>(&e);
  return {{"error", {{"kind", de ? de->kind() : "internal"}, {"message", e.what()}}}};
}

}  // namespace dpf::harness
