#pragma once

// Monte-Carlo campaigns: healthy calibration runs, the mixed-fault campaign,
// aggregation and the paired bootstrap used to compare methods.

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "dpf/harness/run.hpp"

namespace dpf::harness {

/// Calls fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// processed exactly once and fn must only write its own result slot, so the
/// outcome does not depend on the worker count.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

struct RunFailure {
  std::size_t run = 0;
  std::string method;
  std::string kind;
  std::string message;
};

inline RunFailure make_failure(std::size_t run, const std::string& method, const std::exception& e) {
  const auto* de = dynamic_cast<const Error*>(&e);
  return {run, method, de ? de->kind() : "internal", e.what()};
}

inline std::uint64_t calibration_seed(std::uint64_t base, std::size_t i) { return derive_seed(base, 0xca11b000 + i); }
inline std::uint64_t campaign_seed(std::uint64_t base, std::size_t i) { return derive_seed(base, 0xc4a3000 + i); }

struct Calibration {
  std::map<std::string, diagnosis::ThresholdBand> bands;
  std::map<std::string, std::size_t> used_runs;
  std::vector<RunFailure> failures;
  std::size_t particle_checks = 0;
  std::size_t domain_violations = 0;
};

/// Healthy runs of the configured model (fault events removed) for every
/// method; residuals from the start of the baseline window on are pooled
/// into a per-method threshold band.
inline Calibration calibrate(const RunConfig& c, const std::vector<std::string>& methods, double duration) {
  RunConfig h = c;
  h.scenario.events.clear();
  h.scenario.duration = duration;
  const auto sc = to_fault_scenario(h.scenario);
  const Problem p = build_problem(h, sc);
  const std::size_t n = c.campaign.calibration_runs;
  const std::size_t from = seconds_to_steps(c.diagnosis.baseline_from, c.dt);

  struct Slot {
    std::vector<std::optional<std::vector<Vector>>> residuals;
    std::vector<std::optional<RunFailure>> failures;
    std::size_t checks = 0, violations = 0;
  };
  std::vector<Slot> slots(n);
  parallel_for(n, c.campaign.workers, [&](std::size_t i) {
    Slot& s = slots[i];
    s.residuals.resize(methods.size());
    s.failures.resize(methods.size());
    const std::uint64_t seed = calibration_seed(c.seed, i);
    Trajectory truth;
    try {
      truth = simulate(p.model, p.x0, p.theta_truth, p.steps, seed);
    } catch (const std::exception& e) {
      for (std::size_t m = 0; m < methods.size(); ++m) s.failures[m] = make_failure(i, methods[m], e);
      return;
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
      try {
        EstimatorRun e = run_estimator(methods[m], h, p, truth.outputs, seed);
        s.checks += e.trajectory.particle_checks;
        s.violations += e.trajectory.domain_violations;
        auto r = residual_series(e.trajectory, h).residuals;
        s.residuals[m] = std::vector<Vector>(r.begin() + static_cast<std::ptrdiff_t>(std::min(from, r.size())), r.end());
      } catch (const std::exception& e) {
        s.failures[m] = make_failure(i, methods[m], e);
      }
    }
  });

  Calibration out;
  diagnosis::CalibrationConfig cc{c.diagnosis.coverage, c.diagnosis.min_half_width, 25};
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<std::vector<Vector>> pooled;
    for (auto& s : slots) {
      if (s.residuals[m]) pooled.push_back(*s.residuals[m]);
      if (s.failures[m]) out.failures.push_back(*s.failures[m]);
    }
    out.used_runs[methods[m]] = pooled.size();
    out.bands[methods[m]] = diagnosis::calibrate_thresholds(pooled, cc);
  }
  for (auto& s : slots) {
    out.particle_checks += s.checks;
    out.domain_violations += s.violations;
  }
  return out;
}

struct Injection {
  std::size_t component = 0;
  std::size_t step = 0;
  double severity = 0.0;
};

/// Run i of the mixed-fault design: every component fails once, in a seeded
/// random order, one segment apart, each with a seeded uniform severity.
inline std::vector<Injection> campaign_injections(const RunConfig& c, std::uint64_t seed) {
  Rng rng = make_rng(seed, 77);
  std::vector<std::size_t> order{0, 1, 2, 3};
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_real_distribution<double> sev(c.campaign.severity_min, c.campaign.severity_max);
  std::vector<Injection> out;
  const std::size_t first = seconds_to_steps(c.campaign.healthy_phase, c.dt);
  const std::size_t seg = seconds_to_steps(c.campaign.segment, c.dt);
  for (std::size_t k = 0; k < 4; ++k) out.push_back({order[k], first + k * seg, sev(rng)});
  return out;
}

inline double campaign_duration(const RunConfig& c) { return c.campaign.healthy_phase + 4.0 * c.campaign.segment; }

inline ScenarioConfig campaign_scenario(const RunConfig& c, const std::vector<Injection>& inj) {
  ScenarioConfig s = c.scenario;
  s.name = "mixed_fault";
  s.duration = campaign_duration(c);
  s.events.clear();
  for (const auto& e : inj)
    s.events.push_back({static_cast<double>(e.step) * c.dt,
                        gas_turbine::component_name(static_cast<gas_turbine::Component>(e.component)), "step",
                        e.severity, 0.0});
  return s;
}

struct MethodRun {
  bool ok = false;
  diagnosis::ConfusionMatrix confusion;
  std::vector<MaeTable> tables;
  EstimationTrajectory estimate;
  std::vector<Vector> residuals;
  double seconds = 0.0;
};

struct CampaignRun {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<Injection> injections;
  Trajectory truth;
  std::vector<MethodRun> methods;
};

struct MethodSummary {
  std::string method;
  std::size_t particles = 0;
  diagnosis::ConfusionMatrix confusion;
  std::optional<diagnosis::ConfusionMetrics> metrics;
  std::size_t completed = 0;
  std::vector<MaeTable> median_tables;
  double seconds = 0.0;
};

struct CampaignReport {
  RunConfig config;
  std::vector<std::string> methods;
  Calibration calibration;
  std::vector<CampaignRun> runs;
  std::vector<MethodSummary> summaries;
  std::vector<RunFailure> failures;
  std::size_t particle_checks = 0;
  std::size_t domain_violations = 0;
};

/// Cellwise median of equally shaped tables; a cell is empty when every
/// contributing cell is empty.
inline MaeTable median_table(const std::vector<const MaeTable*>& tables) {
  MaeTable out;
  if (tables.empty()) return out;
  out = *tables.front();
  for (std::size_t s = 0; s < out.values.size(); ++s)
    for (std::size_t ph = 0; ph < out.values[s].size(); ++ph) {
      std::vector<double> v;
      for (const auto* t : tables)
        if (t->values[s][ph]) v.push_back(*t->values[s][ph]);
      out.values[s][ph] = v.empty() ? std::nullopt : std::optional<double>(diagnosis::quantile(v, 0.5));
    }
  return out;
}

/// Calibrates every method on healthy runs, then scores the mixed-fault
/// design. Estimator failures are recorded and the run is left out of that
/// method's confusion matrix.
inline CampaignReport run_campaign(const RunConfig& c) {
  CampaignReport rep;
  rep.config = c;
  rep.methods = c.campaign.methods;
  const double duration = campaign_duration(c);
  rep.calibration = calibrate(c, rep.methods, duration);
  rep.failures = rep.calibration.failures;
  rep.particle_checks = rep.calibration.particle_checks;
  rep.domain_violations = rep.calibration.domain_violations;

  const std::size_t n = c.campaign.runs;
  const std::size_t healthy_start = seconds_to_steps(c.diagnosis.baseline_from, c.dt);
  rep.runs.resize(n);
  std::vector<std::vector<RunFailure>> run_failures(n);
  parallel_for(n, c.campaign.workers, [&](std::size_t i) {
    CampaignRun& run = rep.runs[i];
    run.index = i;
    run.seed = campaign_seed(c.seed, i);
    run.injections = campaign_injections(c, run.seed);
    run.methods.resize(rep.methods.size());
    RunConfig rc = c;
    rc.seed = run.seed;
    rc.scenario = campaign_scenario(c, run.injections);
    Problem p;
    try {
      p = build_problem(rc, to_fault_scenario(rc.scenario));
      run.truth = simulate(p.model, p.x0, p.theta_truth, p.steps, run.seed);
    } catch (const std::exception& e) {
      for (const auto& m : rep.methods) run_failures[i].push_back(make_failure(i, m, e));
      return;
    }
    std::vector<std::pair<std::size_t, std::size_t>> inj;
    for (const auto& e : run.injections) inj.emplace_back(e.component, e.step);
    for (std::size_t m = 0; m < rep.methods.size(); ++m) {
      MethodRun& mr = run.methods[m];
      try {
        EstimatorRun e = run_estimator(rep.methods[m], rc, p, run.truth.outputs, run.seed);
        mr.estimate = std::move(e.trajectory);
        mr.seconds = e.seconds;
        mr.residuals = residual_series(mr.estimate, rc).residuals;
        mr.confusion = diagnosis::classify_sequential(mr.residuals, rep.calibration.bands.at(rep.methods[m]),
                                                      decision_config(rc, 0), inj, healthy_start);
        mr.tables = mae_tables(p, run.truth, mr.estimate, rc);
        mr.ok = true;
      } catch (const std::exception& e) {
        run_failures[i].push_back(make_failure(i, rep.methods[m], e));
      }
    }
  });
  for (auto& f : run_failures) rep.failures.insert(rep.failures.end(), f.begin(), f.end());

  for (std::size_t m = 0; m < rep.methods.size(); ++m) {
    MethodSummary s;
    s.method = rep.methods[m];
    std::vector<const MaeTable*> params, states, outputs;
    for (const auto& run : rep.runs) {
      if (run.methods.size() <= m || !run.methods[m].ok) continue;
      const auto& mr = run.methods[m];
      ++s.completed;
      s.confusion.merge(mr.confusion);
      s.seconds += mr.seconds;
      rep.particle_checks += mr.estimate.particle_checks;
      rep.domain_violations += mr.estimate.domain_violations;
      params.push_back(&mr.tables[0]);
      states.push_back(&mr.tables[1]);
      outputs.push_back(&mr.tables[2]);
    }
    if (s.confusion.total() > 0) s.metrics = diagnosis::confusion_metrics(s.confusion);
    if (!params.empty()) s.median_tables = {median_table(params), median_table(states), median_table(outputs)};
    RunConfig rc = c;
    const Problem p = build_problem(rc, to_fault_scenario(campaign_scenario(c, {})));
    const Budget b = particle_budget(c, p.model);
    s.particles = s.method == "dual" ? b.dual : s.method == "bayesian" ? b.bayesian : b.rml;
    rep.summaries.push_back(std::move(s));
  }
  return rep;
}

/// Paired bootstrap over campaign runs: the fraction of resamples in which
/// `better(metric(a), metric(b))` holds, where each resample draws run
/// indices with replacement and pools both methods' matrices over them.
/// Runs that failed for either method are left out.
inline double bootstrap_confidence(const std::vector<diagnosis::ConfusionMatrix>& a,
                                   const std::vector<diagnosis::ConfusionMatrix>& b,
                                   const std::function<std::optional<double>(const diagnosis::ConfusionMetrics&)>& metric,
                                   const std::function<bool(double, double)>& better, std::size_t resamples,
                                   std::uint64_t seed) {
  if (a.size() != b.size() || a.empty()) throw ConfigError("bootstrap needs paired, nonempty run sets");
  Rng rng = make_rng(seed, 0xb0075);
  std::uniform_int_distribution<std::size_t> pick(0, a.size() - 1);
  std::size_t wins = 0, defined = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    diagnosis::ConfusionMatrix ma, mb;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const std::size_t i = pick(rng);
      ma.merge(a[i]);
      mb.merge(b[i]);
    }
    const auto va = metric(diagnosis::confusion_metrics(ma));
    const auto vb = metric(diagnosis::confusion_metrics(mb));
    if (!va || !vb) continue;
    ++defined;
    if (better(*va, *vb)) ++wins;
  }
  if (defined == 0) throw UndefinedMetric("bootstrap metric undefined in every resample");
  return static_cast<double>(wins) / static_cast<double>(defined);
}

/// Per-run matrices of two methods over the runs both completed.
inline std::pair<std::vector<diagnosis::ConfusionMatrix>, std::vector<diagnosis::ConfusionMatrix>> paired_runs(
    const CampaignReport& rep, const std::string& a, const std::string& b) {
  auto index = [&](const std::string& m) {
    auto it = std::find(rep.methods.begin(), rep.methods.end(), m);
    if (it == rep.methods.end()) throw ConfigError("method '" + m + "' is not part of the campaign");
    return static_cast<std::size_t>(it - rep.methods.begin());
  };
  const std::size_t ia = index(a), ib = index(b);
  std::pair<std::vector<diagnosis::ConfusionMatrix>, std::vector<diagnosis::ConfusionMatrix>> out;
  for (const auto& run : rep.runs) {
    if (run.methods.size() <= std::max(ia, ib)) continue;
    if (!run.methods[ia].ok || !run.methods[ib].ok) continue;
    out.first.push_back(run.methods[ia].confusion);
    out.second.push_back(run.methods[ib].confusion);
  }
  return out;
}

struct OrderingConfidence {
  std::string better;
  std::string worse;
  std::string metric;  // "accuracy" (better >= worse) or "false_positive" (better <= worse)
  double confidence = 0.0;
};

/// Bootstrap confidence for each adjacent pair of the method ranking on
/// accuracy, plus dual-vs-RML on the false-positive rate.
inline std::vector<OrderingConfidence> ordering_confidence(const CampaignReport& rep, std::size_t resamples = 2000) {
  std::vector<OrderingConfidence> out;
  auto has = [&](const std::string& m) { return std::find(rep.methods.begin(), rep.methods.end(), m) != rep.methods.end(); };
  auto ac = [](const diagnosis::ConfusionMetrics& m) { return std::optional<double>(m.accuracy); };
  auto fp = [](const diagnosis::ConfusionMetrics& m) { return m.false_positive; };
  auto ge = [](double x, double y) { return x >= y; };
  auto le = [](double x, double y) { return x <= y; };
  auto add = [&](const std::string& a, const std::string& b, const std::string& metric) {
    if (!has(a) || !has(b)) return;
    auto [ma, mb] = paired_runs(rep, a, b);
    if (ma.empty()) return;
    const double conf = metric == "accuracy" ? bootstrap_confidence(ma, mb, ac, ge, resamples, rep.config.seed)
                                             : bootstrap_confidence(ma, mb, fp, le, resamples, rep.config.seed);
    out.push_back({a, b, metric, conf});
  };
  add("dual", "rml", "accuracy");
  add("rml", "bayesian", "accuracy");
  add("dual", "rml", "false_positive");
  return out;
}

}  // namespace dpf::harness
