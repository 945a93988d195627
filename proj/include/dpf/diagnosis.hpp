#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "dpf/errors.hpp"
#include "dpf/linalg.hpp"

namespace dpf::diagnosis {

struct HealthyBaseline {
  Vector theta0;
  Matrix fit_cov;
  std::size_t window = 0;
  bool short_window = false;  // window below the convergence horizon
};

/// Gaussian fit of the windowed healthy estimates; theta0 is its mode.
inline HealthyBaseline fit_healthy_baseline(const std::vector<Vector>& estimates, std::size_t horizon = 200) {
  if (estimates.size() < 2) throw CalibrationError("baseline fit needs at least two estimates");
  Matrix m(estimates.front().size(), static_cast<Eigen::Index>(estimates.size()));
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    if (estimates[k].size() != m.rows()) throw ConfigError("baseline estimates differ in dimension");
    m.col(static_cast<Eigen::Index>(k)) = estimates[k];
  }
  HealthyBaseline b;
  b.theta0 = column_mean(m);
  b.fit_cov = sample_covariance(m);
  b.window = estimates.size();
  b.short_window = estimates.size() < horizon;
  return b;
}

/// r_t = theta0 - theta_t; positive entries mean loss of effectiveness.
inline Vector residual(const HealthyBaseline& b, const Vector& theta_hat) {
  if (theta_hat.size() != b.theta0.size()) throw ConfigError("residual dimension mismatch");
  return b.theta0 - theta_hat;
}

struct ThresholdBand {
  Vector lower;
  Vector upper;

  bool inside(Eigen::Index k, double r) const { return r >= lower(k) && r <= upper(k); }
};

/// Type-7 empirical quantile (linear interpolation between order statistics).
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw CalibrationError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct CalibrationConfig {
  double coverage = 0.99;
  double min_half_width = 1e-4;
  std::size_t min_runs = 25;
};

/// Per-component central band holding `coverage` of all healthy residual
/// samples pooled over runs; widened to at least +-min_half_width.
inline ThresholdBand calibrate_thresholds(const std::vector<std::vector<Vector>>& healthy_runs,
                                          const CalibrationConfig& cfg = {}) {
  if (healthy_runs.size() < cfg.min_runs)
    throw CalibrationError("threshold calibration needs at least " + std::to_string(cfg.min_runs) + " runs");
  if (!(cfg.coverage > 0.0 && cfg.coverage < 1.0)) throw ConfigError("coverage must lie in (0, 1)");
  Eigen::Index dim = -1;
  for (const auto& run : healthy_runs)
    for (const auto& r : run) {
      if (dim < 0) dim = r.size();
      if (r.size() != dim) throw ConfigError("residual dimension mismatch");
    }
  if (dim < 0) throw CalibrationError("calibration runs hold no residuals");
  ThresholdBand band{Vector(dim), Vector(dim)};
  const double tail = 0.5 * (1.0 - cfg.coverage);
  for (Eigen::Index k = 0; k < dim; ++k) {
    std::vector<double> s;
    for (const auto& run : healthy_runs)
      for (const auto& r : run) s.push_back(r(k));
    band.lower(k) = std::min(quantile(s, tail), -cfg.min_half_width);
    band.upper(k) = std::max(quantile(s, 1.0 - tail), cfg.min_half_width);
  }
  return band;
}

struct ComponentDecision {
  bool detected = false;
  std::optional<std::size_t> t_detect;  // step after the last sample of the confirming run
  double severity = 0.0;                // mean residual over the window after detection
  double peak_excursion = 0.0;          // largest distance outside the band, any step
};

struct DecisionConfig {
  std::size_t persistence = 5;
  std::size_t severity_window = 100;  // 1 s at 10 ms
  std::size_t start = 0;              // ignore steps before this index
};

/// Flags each component whose residual stays outside its band for
/// `persistence` consecutive steps.
inline std::vector<ComponentDecision> decide(const std::vector<Vector>& residuals, const ThresholdBand& band,
                                             const DecisionConfig& cfg = {}) {
  if (cfg.persistence < 1) throw ConfigError("persistence must be at least 1");
  const Eigen::Index dim = band.lower.size();
  std::vector<ComponentDecision> out(static_cast<std::size_t>(dim));
  for (Eigen::Index k = 0; k < dim; ++k) {
    auto& d = out[static_cast<std::size_t>(k)];
    std::size_t run = 0;
    for (std::size_t t = cfg.start; t < residuals.size(); ++t) {
      const double r = residuals[t](k);
      const double excess = std::max(r - band.upper(k), band.lower(k) - r);
      if (excess > 0.0) {
        d.peak_excursion = std::max(d.peak_excursion, excess);
        ++run;
        if (!d.detected && run == cfg.persistence) {
          d.detected = true;
          d.t_detect = t + 1;
        }
      } else {
        run = 0;
      }
    }
    if (d.detected) {
      const std::size_t from = *d.t_detect - cfg.persistence;
      const std::size_t to = std::min(residuals.size(), from + cfg.severity_window);
      double sum = 0.0;
      for (std::size_t t = from; t < to; ++t) sum += residuals[t](k);
      d.severity = sum / static_cast<double>(to - from);
    }
  }
  return out;
}

/// Categories 0..3 are the four components; 4 is "no fault".
constexpr std::size_t kCategories = 5;
constexpr std::size_t kNoFault = 4;

struct ConfusionMatrix {
  std::array<std::array<long, kCategories>, kCategories> c{};

  void add(std::size_t actual, std::size_t decided) { ++c.at(actual).at(decided); }
  long total() const {
    long s = 0;
    for (const auto& row : c)
      for (long v : row) s += v;
    return s;
  }
  long row_sum(std::size_t i) const {
    long s = 0;
    for (long v : c.at(i)) s += v;
    return s;
  }
  long col_sum(std::size_t j) const {
    long s = 0;
    for (const auto& row : c) s += row.at(j);
    return s;
  }
  void merge(const ConfusionMatrix& o) {
    for (std::size_t i = 0; i < kCategories; ++i)
      for (std::size_t j = 0; j < kCategories; ++j) c[i][j] += o.c[i][j];
  }
};

struct ConfusionMetrics {
  double accuracy = 0.0;                                // percent
  std::array<std::optional<double>, 4> precision{};     // percent; empty when the column is empty
  std::optional<double> false_positive;                 // percent; empty when no healthy row
};

inline ConfusionMetrics confusion_metrics(const ConfusionMatrix& m) {
  const long total = m.total();
  if (total <= 0) throw UndefinedMetric("confusion matrix is empty");
  for (const auto& row : m.c)
    for (long v : row)
      if (v < 0) throw UndefinedMetric("confusion matrix has negative counts");
  ConfusionMetrics r;
  long diag = 0;
  for (std::size_t i = 0; i < kCategories; ++i) diag += m.c[i][i];
  r.accuracy = 100.0 * static_cast<double>(diag) / static_cast<double>(total);
  for (std::size_t j = 0; j < 4; ++j) {
    const long col = m.col_sum(j);
    if (col > 0) r.precision[j] = 100.0 * static_cast<double>(m.c[j][j]) / static_cast<double>(col);
  }
  const long healthy = m.row_sum(kNoFault);
  if (healthy > 0) {
    long fp = 0;
    for (std::size_t j = 0; j < 4; ++j) fp += m.c[kNoFault][j];
    r.false_positive = 100.0 * static_cast<double>(fp) / static_cast<double>(healthy);
  }
  return r;
}

/// 100 * mean |est - truth| / |nominal| over [from, to).
inline double mae_percent(const std::vector<double>& est, const std::vector<double>& truth, double nominal,
                          std::size_t from, std::size_t to) {
  if (nominal == 0.0) throw UndefinedMetric("MAE% needs a nonzero nominal value");
  if (est.size() != truth.size()) throw ConfigError("estimate and truth lengths differ");
  if (!(from < to && to <= est.size())) throw ConfigError("MAE window outside the trajectory");
  double s = 0.0;
  for (std::size_t t = from; t < to; ++t) s += std::abs(est[t] - truth[t]);
  return 100.0 * s / static_cast<double>(to - from) / std::abs(nominal);
}

/// One run's contribution to the confusion matrix. Each injected component
/// contributes one count (its own flag, else the strongest spurious flag,
/// else "no fault"); a run with no injected fault contributes one count to
/// the healthy row (the strongest flag, or "no fault").
inline ConfusionMatrix classify_run(const std::vector<ComponentDecision>& decisions,
                                    const std::vector<std::size_t>& injected) {
  ConfusionMatrix m;
  auto strongest_other = [&](auto&& excluded) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    double peak = -1.0;
    for (std::size_t j = 0; j < decisions.size() && j < 4; ++j)
      if (decisions[j].detected && !excluded(j) && decisions[j].peak_excursion > peak) {
        best = j;
        peak = decisions[j].peak_excursion;
      }
    return best;
  };
  auto is_injected = [&](std::size_t j) { return std::find(injected.begin(), injected.end(), j) != injected.end(); };
  if (injected.empty()) {
    const auto j = strongest_other([](std::size_t) { return false; });
    m.add(kNoFault, j ? *j : kNoFault);
    return m;
  }
  for (std::size_t k : injected) {
    if (k >= 4) throw ConfigError("injected component index out of range");
    if (k < decisions.size() && decisions[k].detected) {
      m.add(k, k);
    } else {
      const auto j = strongest_other(is_injected);
      m.add(k, j ? *j : kNoFault);
    }
  }
  return m;
}

/// Scores a run with a healthy phase followed by sequential single-component
/// injections at `injections[k].second` (step index) on component
/// `injections[k].first`. The healthy phase adds one count to the healthy
/// row. Each injection adds one count to its component's row, decided
/// within its own segment among the components not injected earlier: the
/// injected component if it is flagged, else the strongest other flag, else
/// "no fault".
inline ConfusionMatrix classify_sequential(const std::vector<Vector>& residuals, const ThresholdBand& band,
                                           const DecisionConfig& cfg,
                                           const std::vector<std::pair<std::size_t, std::size_t>>& injections,
                                           std::size_t healthy_start = 0) {
  ConfusionMatrix m;
  auto segment = [&](std::size_t from, std::size_t to) {
    const std::vector<Vector> slice(residuals.begin() + static_cast<std::ptrdiff_t>(from),
                                    residuals.begin() + static_cast<std::ptrdiff_t>(to));
    return decide(slice, band, cfg);
  };
  auto strongest = [](const std::vector<ComponentDecision>& d, auto&& eligible) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    double peak = -1.0;
    for (std::size_t j = 0; j < d.size() && j < 4; ++j)
      if (d[j].detected && eligible(j) && d[j].peak_excursion > peak) {
        best = j;
        peak = d[j].peak_excursion;
      }
    return best;
  };
  const std::size_t first = injections.empty() ? residuals.size() : injections.front().second;
  if (healthy_start > first || first > residuals.size()) throw ConfigError("injection schedule outside the run");
  {
    const auto d = segment(healthy_start, first);
    const auto j = strongest(d, [](std::size_t) { return true; });
    m.add(kNoFault, j ? *j : kNoFault);
  }
  std::vector<bool> injected(4, false);
  for (std::size_t k = 0; k < injections.size(); ++k) {
    const auto [comp, start] = injections[k];
    if (comp >= 4) throw ConfigError("injected component index out of range");
    const std::size_t end = k + 1 < injections.size() ? injections[k + 1].second : residuals.size();
    if (!(start <= end && end <= residuals.size())) throw ConfigError("injection schedule must be increasing");
    injected[comp] = true;
    const auto d = segment(start, end);
    if (d[comp].detected) {
      m.add(comp, comp);
    } else {
      const auto j = strongest(d, [&](std::size_t c) { return !injected[c]; });
      m.add(comp, j ? *j : kNoFault);
    }
  }
  return m;
}

}  // namespace dpf::diagnosis
