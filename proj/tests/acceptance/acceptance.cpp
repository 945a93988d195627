// Acceptance checks. One PASS/FAIL line per criterion; the exit status is
// nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>

#include "dpf/dpf.hpp"
#include "dpf/harness/io.hpp"
#include "../unit/confusion_tables.hpp"
#include "../unit/ef_oracle.hpp"
#include "../unit/engine_oracle.hpp"
#include "../unit/kalman.hpp"
#include "../unit/stats.hpp"

using namespace dpf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Reference confusion counts reproduce every metric cell.
Outcome confusion_reproduction() {
  struct Row {
    diagnosis::ConfusionMatrix m;
    double ac, fp;
    std::array<double, 4> p;
  };
  const std::vector<Row> rows{
      {testing_tables::dual_pe(), 86.29, 5.71, {93.94, 93.75, 77.78, 74.36}},
      {testing_tables::rml(), 78.86, 11.43, {87.50, 72.97, 74.29, 72.22}},
      {testing_tables::bayesian(), 25.95, 85.71, {25.00, 32.50, 23.68, 34.38}},
  };
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<diagnosis::ConfusionMetrics> got;
  for (const auto& r : rows) got.push_back(diagnosis::confusion_metrics(r.m));
  const double secs = seconds_since(t0);
  double worst = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    worst = std::max(worst, std::abs(got[i].accuracy - rows[i].ac));
    worst = std::max(worst, got[i].false_positive ? std::abs(*got[i].false_positive - rows[i].fp) : 1e9);
    for (std::size_t j = 0; j < 4; ++j)
      worst = std::max(worst, got[i].precision[j] ? std::abs(*got[i].precision[j] - rows[i].p[j]) : 1e9);
  }
  return {worst <= 0.01 && secs < 1e-3,
          "max cell deviation " + fmt(worst) + " pp, " + fmt(secs * 1e6, 3) + " us"};
}

// 2. EF polynomials against hand expansions, table sums against totals.
Outcome ef_fidelity() {
  using namespace complexity;
  std::mt19937_64 rng(20240);
  std::uniform_int_distribution<int> dim(1, 12), cost(0, 100), n(1, 500);
  auto draw = [&] {
    return CostModel{double(dim(rng)), double(dim(rng)), double(dim(rng)), double(cost(rng)),
                     double(cost(rng)), double(cost(rng)), double(n(rng))};
  };
  std::size_t poly_mismatch = 0;
  for (int i = 0; i < 100; ++i) {
    const auto c = draw();
    poly_mismatch += ef_complexity(Method::dual, c) != testing_ef::dual(c);
    poly_mismatch += ef_complexity(Method::bayesian, c) != testing_ef::bayesian(c);
    poly_mismatch += ef_complexity(Method::rml, c) != testing_ef::rml(c);
  }
  std::size_t table_mismatch = 0, bayes_offset_mismatch = 0;
  for (int i = 0; i < 5; ++i) {
    const auto c = draw();
    table_mismatch += table_n_terms(dual_state_table(), c) + table_n_terms(dual_param_table(), c) !=
                      ef_complexity(Method::dual, c);
    table_mismatch += table_n_terms(rml_table(), c) != ef_complexity(Method::rml, c);
    bayes_offset_mismatch += table_n_terms(bayesian_table(), c) != ef_complexity(Method::bayesian, c);
  }
  return {poly_mismatch == 0 && table_mismatch == 0,
          "polynomial mismatches " + std::to_string(poly_mismatch) + "/300, dual+RML table mismatches " +
              std::to_string(table_mismatch) + "/10 (Bayesian rows differ from its total at " +
              std::to_string(bayes_offset_mismatch) + "/5 tuples by 2N(n_x+n_theta))"};
}

// 3. Particle mean against the exact Kalman mean.
double kalman_relative_rmse(std::size_t n, std::size_t T, std::uint64_t seed) {
  const auto m = models::linear_gaussian_2d();
  const Matrix F = models::linear_gaussian_2d_transition();
  const auto tr = simulate(m, Vector::Zero(2), std::vector<Vector>(T, Vector::Ones(1)), T, seed);
  const auto kf = testing_kalman::kalman(F, Matrix::Identity(2, 2), m.process_noise_cov, m.measurement_noise_cov,
                                         Vector::Zero(2), Matrix::Identity(2, 2), tr.outputs);
  Rng rng = make_rng(seed, 99);
  auto f = StateFilter::from_gaussian(Vector::Zero(2), Matrix::Identity(2, 2), StateFilterConfig{n, {}}, rng);
  double se = 0.0, var = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto r = f.step(Vector::Ones(1), tr.outputs[t], m, rng);
    se += (r.estimate - kf[t].mean).squaredNorm();
    var += kf[t].cov.trace();
  }
  return std::sqrt(se / var);
}

Outcome kalman_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> rel;
  for (std::uint64_t s = 0; s < 20; ++s) rel.push_back(kalman_relative_rmse(2000, 100, 1000 + s));
  const double secs = seconds_since(t0);
  const double med = testing_stats::median(rel);
  return {med < 0.1 && secs < 10.0, "median RMSE / Kalman std " + fmt(med) + ", " + fmt(secs, 3) + " s"};
}

// 4. Scalar tracking: the median over 25 seeds of |theta_hat - theta*| / theta*
// must enter and stay inside 2% within 200 steps of the start, and within
// 300 steps of a 5% step.
std::optional<std::size_t> settling(const std::vector<double>& med_rel, std::size_t from, std::size_t to) {
  std::optional<std::size_t> s;
  for (std::size_t t = to; t-- > from;) {
    if (med_rel[t] >= 0.02) break;
    s = t - from + 1;  // number of estimates consumed before the band holds
  }
  return s;
}

Outcome scalar_tracking() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto base = harness::build_config("synthetic_scalar", nullptr, nullptr);
  const std::size_t step_at = 400, end = base.steps();
  std::vector<std::vector<double>> rel(end);
  for (std::uint64_t s = 0; s < 25; ++s) {
    auto c = base;
    c.seed = s;
    const auto r = harness::run_scenario(c);
    for (std::size_t t = 0; t < end; ++t) {
      const double truth = r.problem.theta_truth[t](0);
      rel[t].push_back(std::abs(r.estimate.rows[t].theta(0) - truth) / truth);
    }
  }
  std::vector<double> med(end);
  for (std::size_t t = 0; t < end; ++t) med[t] = testing_stats::median(rel[t]);
  const auto s1 = settling(med, 0, step_at);
  const auto s2 = settling(med, step_at, end);
  const double secs = seconds_since(t0);
  auto show = [](const std::optional<std::size_t>& s) { return s ? std::to_string(*s) : std::string("never"); };
  const bool ok = s1 && *s1 <= 200 && s2 && *s2 <= 300 && secs < 60.0;
  return {ok, "settling " + show(s1) + " steps (limit 200), after 5% step " + show(s2) +
                  " steps (limit 300), median rel. error at step 400 " + fmt(med[step_at - 1]) + ", at end " +
                  fmt(med[end - 1]) + ", " + fmt(secs, 3) + " s"};
}

// 5. Kernel evolution with zero prediction error keeps ensemble variance.
Outcome non_dispersion() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelSpec m;
  m.name = "blind";
  m.n_x = m.n_y = m.n_theta = 1;
  m.transition = [](std::size_t, const Vector& x, const Vector&, const Vector& w) { return Vector(x + w); };
  m.output = [](const Vector& x, const Vector&) { return x; };
  m.process_noise_cov = Matrix::Ones(1, 1);
  m.measurement_noise_cov = Matrix::Ones(1, 1);
  m.param_domain = {Vector::Constant(1, -1e6), Vector::Constant(1, 1e6)};
  ParamFilterConfig c;
  c.particles = 10000;
  c.shrinkage = 0.93;
  c.evolution_cov = Matrix::Constant(1, 1, 0.04);
  Rng rng = make_rng(21);
  auto f = ParamFilter::from_gaussian(Vector::Ones(1), Matrix::Constant(1, 1, 0.04), c, m.param_domain, rng);
  const StateContext ctx{Vector::Zero(1), Vector::Zero(1), 0, {}};
  const double v0 = sample_covariance(f.ensemble().particles)(0, 0);
  for (int t = 0; t < 100; ++t) f.step(ctx, Vector::Zero(1), m, rng);
  const double v1 = sample_covariance(f.ensemble().particles)(0, 0);
  const double drift = std::abs(v1 - v0) / v0;
  const double secs = seconds_since(t0);
  return {drift < 0.1 && secs < 30.0, "variance drift " + fmt(100 * drift, 3) + "%, " + fmt(secs, 3) + " s"};
}

// 6 and 7 share one campaign.
struct CampaignResult {
  harness::CampaignReport report;
  std::vector<harness::OrderingConfidence> ordering;
  double seconds = 0.0;
};

const CampaignResult& campaign() {
  static const CampaignResult r = [] {
    CampaignResult out;
    const auto t0 = std::chrono::steady_clock::now();
    out.report = harness::run_campaign(harness::build_config("synthetic_campaign", nullptr, nullptr));
    out.ordering = harness::ordering_confidence(out.report);
    out.seconds = seconds_since(t0);
    return out;
  }();
  return r;
}

Outcome domain_invariant() {
  const auto& rep = campaign().report;
  // A second design on the engine model adds gas-turbine particle-steps.
  auto c = harness::build_config("scenario_II_simultaneous", nullptr, nullptr);
  std::size_t checks = rep.particle_checks, violations = rep.domain_violations;
  for (const std::string m : {"dual", "bayesian", "rml"}) {
    const auto r = harness::run_scenario(c, {}, m);
    checks += r.estimate.particle_checks;
    violations += r.estimate.domain_violations;
  }
  return {violations == 0 && checks >= 1000000,
          std::to_string(violations) + " violations over " + std::to_string(checks) + " particle-steps"};
}

Outcome method_ordering() {
  const auto& cr = campaign();
  std::ostringstream os;
  for (const auto& s : cr.report.summaries)
    os << s.method << " N=" << s.particles << " AC " << fmt(s.metrics ? s.metrics->accuracy : -1) << "% FP "
       << fmt(s.metrics && s.metrics->false_positive ? *s.metrics->false_positive : -1) << "%; ";
  bool ok = cr.ordering.size() == 3 && cr.seconds < 600.0 && cr.report.failures.empty();
  for (const auto& o : cr.ordering) {
    os << o.better << (o.metric == "accuracy" ? " AC>= " : " FP<= ") << o.worse << " conf " << fmt(o.confidence, 3)
       << "; ";
    ok = ok && o.confidence >= 0.9;
  }
  os << cr.report.failures.size() << " failed runs, " << fmt(cr.seconds, 3) << " s";
  return {ok, os.str()};
}

// 8. Grid example plus resampling unbiasedness and chi-square suites.
Outcome regularization_and_resampling() {
  Matrix x(1, 2);
  x << 0, 1;
  const auto g = make_regularization_grid(x, 3);
  const bool grid_ok = g.at(0, 0) == -0.5 && g.at(0, 1) == 0.5 && g.at(0, 2) == 1.5;

  const double crit3 = testing_stats::chi_square_critical(3, 0.01);
  Vector w(4);
  w << 0.1, 0.2, 0.3, 0.4;
  const std::size_t n = 10, seeds = 1000;
  std::vector<double> boot(4, 0), resid(4, 0), expected(4);
  for (int k = 0; k < 4; ++k) expected[k] = static_cast<double>(n * seeds) * w(k);
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rb = make_rng(s, 1), rr = make_rng(s, 2);
    for (auto i : resample_bootstrap(w, n, rb)) boot[i] += 1;
    for (auto i : resample_residual(w, n, rr)) resid[i] += 1;
  }
  // Pooled counts are multinomial for bootstrap and less dispersed for
  // residual resampling, so the Pearson test is valid (conservative) for both.
  const double chi_b = testing_stats::chi_square(boot, expected);
  const double chi_r = testing_stats::chi_square(resid, expected);

  // Per-seed goodness of fit: rejections at 1% must stay within the 99.9%
  // binomial upper bound for 1000 trials (mean 10).
  Vector v(10);
  for (int k = 0; k < 10; ++k) v(k) = k + 1.0;
  v /= v.sum();
  const std::size_t draws = 1000;
  const double crit9 = testing_stats::chi_square_critical(9, 0.01);
  std::size_t rejected = 0;
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng = make_rng(s, 3);
    std::vector<double> counts(10, 0), exp(10);
    for (auto i : resample_bootstrap(v, draws, rng)) counts[i] += 1;
    for (int k = 0; k < 10; ++k) exp[k] = static_cast<double>(draws) * v(k);
    rejected += testing_stats::chi_square(counts, exp) > crit9;
  }
  const bool ok = grid_ok && chi_b < crit3 && chi_r < crit3 && rejected <= 21;
  return {ok, std::string("grid ") + (grid_ok ? "exact" : "wrong") + ", pooled chi2 bootstrap " + fmt(chi_b) +
                  " residual " + fmt(chi_r) + " (crit " + fmt(crit3) + "), per-seed rejections " +
                  std::to_string(rejected) + "/1000 (limit 21)"};
}

// 9. Engine structural identities.
Outcome engine_identities() {
  const auto d = gas_turbine::design(gas_turbine::DesignPoint{});
  const auto e = testing_engine::check_identities(d, 1000, 4242);
  return {e.max() < 1e-9, "worst relative deviation " + fmt(e.max(), 3)};
}

// 10. Repeated CLI runs give byte-identical outputs (timing.json aside).
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().filename() == "timing.json") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    files[fs::relative(entry.path(), dir).string()] = os.str();
  }
  return files;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / ("dpf_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::vector<std::pair<std::string, std::string>> cases{
      {"simulate", "simulate -p synthetic_scalar -s 3"},
      {"estimate", "estimate -p synthetic_scalar -s 3"},
      {"estimate_engine", "estimate -p scenario_I_concurrent -e rml --duration 4 -s 5"},
      {"diagnose", "diagnose -p synthetic_scalar -s 4"},
      {"calibrate", "calibrate -p synthetic_campaign --set campaign.segment=0.5 -s 6"},
      {"campaign", "campaign -p synthetic_campaign --runs 2 -w 2 --set campaign.segment=0.5 -s 7"},
      {"complexity", "complexity -p synthetic_campaign"},
  };
  std::size_t files = 0;
  std::vector<std::string> bad;
  for (const auto& [name, args] : cases) {
    std::map<std::string, std::string> snaps[2];
    bool ran = true;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = root / name / std::to_string(rep);
      const std::string cmd = std::string(DPF_CLI_PATH) + " " + args + " -o " + out.string() + " > /dev/null";
      if (std::system(cmd.c_str()) != 0 || !fs::exists(out)) {
        ran = false;
        break;
      }
      snaps[rep] = snapshot(out);
    }
    if (!ran) bad.push_back(name + " (failed to run)");
    else if (snaps[0].empty() || snaps[0] != snaps[1]) bad.push_back(name);
    else files += snaps[0].size();
  }
  fs::remove_all(root);
  std::string detail = std::to_string(cases.size() - bad.size()) + "/" + std::to_string(cases.size()) +
                       " invocations identical over " + std::to_string(files) + " files";
  for (const auto& b : bad) detail += "; differs: " + b;
  return {bad.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"confusion metrics reproduce the reference table", confusion_reproduction},
      {"EF polynomial and cost-table fidelity", ef_fidelity},
      {"state filter agrees with the Kalman filter", kalman_oracle},
      {"scalar parameter tracking", scalar_tracking},
      {"kernel evolution non-dispersion", non_dispersion},
      {"parameter domain invariant", domain_invariant},
      {"method ordering on the mixed-fault campaign", method_ordering},
      {"regularization grid and resampling statistics", regularization_and_resampling},
      {"gas-turbine structural identities", engine_identities},
      {"CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "AC" << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
