// Command-line front end: simulate, estimate, diagnose, campaign, complexity
// and calibrate.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>

#include "dpf/harness/io.hpp"

namespace {

using dpf::harness::json;
namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::string preset;
  std::string out = "out";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> particles;
  std::optional<std::size_t> runs;
  std::optional<double> duration;
  std::string estimator;
  std::string model;
  std::string thresholds;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("-c,--config", o.config_path, "JSON config file");
  app->add_option("-p,--preset", o.preset, "named preset applied before the config file");
  app->add_option("-o,--out", o.out, "output directory");
  app->add_option("-s,--seed", o.seed, "base seed");
  app->add_option("-w,--workers", o.workers, "worker threads for Monte-Carlo runs");
  app->add_option("-n,--particles", o.particles, "dual-filter particle count");
  app->add_option("-e,--estimator", o.estimator, "dual, bayesian or rml");
  app->add_option("-m,--model", o.model, "gas_turbine, synthetic_health4, synthetic_scalar or linear_gaussian");
  app->add_option("--duration", o.duration, "scenario duration in seconds");
  app->add_option("--runs", o.runs, "campaign runs");
  app->add_option("--set", o.sets, "override as dotted.key=value (value parsed as JSON when possible)");
}

/// "a.b.c=v" becomes {"a":{"b":{"c":v}}}.
json parse_set(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw dpf::ConfigError("override '" + s + "' is not key=value");
  const std::string key = s.substr(0, eq);
  const std::string raw = s.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json root = json::object();
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw dpf::ConfigError("override key '" + key + "' has an empty segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  return root;
}

dpf::harness::RunConfig resolve(const CommonOptions& o) {
  json doc = o.config_path.empty() ? json(nullptr) : dpf::harness::load_json_file(o.config_path);
  json over = json::object();
  for (const auto& s : o.sets) over.merge_patch(parse_set(s));
  if (o.seed) over["seed"] = *o.seed;
  if (o.particles) over["particles"] = *o.particles;
  if (!o.estimator.empty()) over["estimator"] = o.estimator;
  if (!o.model.empty()) over["model"] = o.model;
  if (o.duration) over["scenario"]["duration"] = *o.duration;
  if (o.workers) over["campaign"]["workers"] = *o.workers;
  if (o.runs) over["campaign"]["runs"] = *o.runs;
  std::string preset = o.preset;
  if (preset.empty() && o.config_path.empty()) preset = "paper_defaults";
  return dpf::harness::build_config(preset, doc, over);
}

/// Wall-clock data lives in its own file so every other artifact is a pure
/// function of the config and seed.
void write_timing(const fs::path& dir, const std::string& command, double seconds, const json& extra = json::object()) {
  json t{{"command", command}, {"wall_seconds", seconds}};
  t.update(extra);
  dpf::harness::write_json_file(dir / "timing.json", t);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::map<std::string, dpf::diagnosis::ThresholdBand> load_bands(const std::string& path) {
  return dpf::harness::bands_from_json(dpf::harness::load_json_file(path));
}

int cmd_simulate(const CommonOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = resolve(o);
  const auto sc = dpf::harness::to_fault_scenario(c.scenario);
  const auto p = dpf::harness::build_problem(c, sc);
  const auto truth = dpf::simulate(p.model, p.x0, p.theta_truth, p.steps, c.seed);
  fs::create_directories(o.out);
  std::ostringstream os;
  dpf::write_trajectory_csv(os, truth);
  dpf::harness::write_text(fs::path(o.out) / "trajectory.csv", os.str());
  dpf::harness::write_json_file(fs::path(o.out) / "report.json",
                                {{"config", dpf::harness::config_to_json(c)},
                                 {"steps", p.steps},
                                 {"final_state", dpf::harness::to_json_vec(truth.states.back())}});
  write_timing(o.out, "simulate", elapsed(t0));
  std::cout << "simulated " << p.steps << " steps of " << c.model << " into " << o.out << "\n";
  return 0;
}

void print_tables(const std::vector<dpf::harness::MaeTable>& tables) {
  for (const auto& t : tables) std::cout << dpf::harness::format_table(t) << "\n";
}

int cmd_estimate(const CommonOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = resolve(o);
  const auto r = dpf::harness::run_scenario(c);
  dpf::harness::write_scenario(o.out, r);
  write_timing(o.out, "estimate", elapsed(t0),
               {{"estimator_seconds", r.seconds},
                {"seconds_per_step", r.seconds / static_cast<double>(std::max<std::size_t>(1, r.estimate.rows.size()))}});
  print_tables(r.tables);
  return 0;
}

int cmd_diagnose(const CommonOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = resolve(o);
  dpf::diagnosis::ThresholdBand band;
  if (!o.thresholds.empty()) {
    const auto bands = load_bands(o.thresholds);
    auto it = bands.find(c.estimator);
    if (it == bands.end()) throw dpf::ConfigError("thresholds file has no band for '" + c.estimator + "'");
    band = it->second;
  } else {
    const auto cal = dpf::harness::calibrate(c, {c.estimator}, c.scenario.duration);
    band = cal.bands.at(c.estimator);
    fs::create_directories(o.out);
    dpf::harness::write_json_file(fs::path(o.out) / "thresholds.json", dpf::harness::calibration_json(cal, c));
  }
  const auto r = dpf::harness::run_scenario(c, band);
  dpf::harness::write_scenario(o.out, r);
  write_timing(o.out, "diagnose", elapsed(t0), {{"estimator_seconds", r.seconds}});
  std::cout << "detection order:";
  for (auto i : dpf::harness::detection_order(r.diagnosis->decisions))
    std::cout << ' ' << dpf::gas_turbine::component_name(static_cast<dpf::gas_turbine::Component>(i));
  std::cout << "\n";
  print_tables(r.tables);
  return 0;
}

int cmd_calibrate(const CommonOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = resolve(o);
  const std::vector<std::string> methods =
      o.estimator.empty() ? c.campaign.methods : std::vector<std::string>{c.estimator};
  const auto cal = dpf::harness::calibrate(c, methods, c.scenario.duration);
  fs::create_directories(o.out);
  dpf::harness::write_json_file(fs::path(o.out) / "thresholds.json", dpf::harness::calibration_json(cal, c));
  write_timing(o.out, "calibrate", elapsed(t0));
  for (const auto& [m, b] : cal.bands)
    std::cout << m << ": upper " << b.upper.transpose() << " | lower " << b.lower.transpose() << "\n";
  return 0;
}

int cmd_campaign(const CommonOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  auto c = resolve(o);
  const auto rep = dpf::harness::run_campaign(c);
  const auto ordering = dpf::harness::ordering_confidence(rep);
  dpf::harness::write_campaign(o.out, rep, ordering);
  json per_method = json::object();
  for (const auto& s : rep.summaries) per_method[s.method] = s.seconds;
  write_timing(o.out, "campaign", elapsed(t0), {{"estimator_seconds", per_method}});
  for (const auto& s : rep.summaries) {
    std::cout << s.method << " (N=" << s.particles << ", runs=" << s.completed << "): ";
    if (s.metrics)
      std::cout << "AC " << s.metrics->accuracy << "%, FP "
                << (s.metrics->false_positive ? std::to_string(*s.metrics->false_positive) : std::string("-")) << "%";
    std::cout << "\n";
  }
  for (const auto& x : ordering)
    std::cout << x.better << (x.metric == "accuracy" ? " >= " : " <= ") << x.worse << " on " << x.metric
              << ": confidence " << x.confidence << "\n";
  if (!rep.failures.empty()) std::cout << rep.failures.size() << " run failures recorded\n";
  return 0;
}

int cmd_complexity(const CommonOptions& o) {
  const auto c = resolve(o);
  const auto sc = dpf::harness::to_fault_scenario(c.scenario);
  const auto p = dpf::harness::build_problem(c, sc);
  const json j = dpf::harness::complexity_json(c, p.model);
  fs::create_directories(o.out);
  dpf::harness::write_json_file(fs::path(o.out) / "complexity.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual particle-filter state and parameter estimation with fault diagnosis"};
  app.require_subcommand(1);
  CommonOptions o;
  auto* sim = app.add_subcommand("simulate", "simulate the truth trajectory of a scenario");
  auto* est = app.add_subcommand("estimate", "run one estimator on one simulated scenario");
  auto* dia = app.add_subcommand("diagnose", "estimate, then detect and isolate faults from the residuals");
  auto* cam = app.add_subcommand("campaign", "mixed-fault Monte-Carlo campaign over all configured methods");
  auto* cpx = app.add_subcommand("complexity", "equivalent-flop totals and particle-budget matching");
  auto* cal = app.add_subcommand("calibrate", "healthy Monte-Carlo runs to set residual thresholds");
  for (auto* s : {sim, est, dia, cam, cpx, cal}) add_common(s, o);
  dia->add_option("-t,--thresholds", o.thresholds, "thresholds.json written by calibrate");
  bool list = false;
  app.add_flag("--list-presets", list, "print the preset names and exit");
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (list) {
    for (const auto& p : dpf::harness::preset_names()) std::cout << p << "\n";
    return 0;
  }
  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (est->parsed()) return cmd_estimate(o);
    if (dia->parsed()) return cmd_diagnose(o);
    if (cam->parsed()) return cmd_campaign(o);
    if (cpx->parsed()) return cmd_complexity(o);
    if (cal->parsed()) return cmd_calibrate(o);
    std::cerr << app.help();
    return 2;
  } catch (const dpf::ConfigError& e) {
    std::cerr << dpf::harness::error_json(e).dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << dpf::harness::error_json(e).dump() << "\n";
    return 1;
  }
}
