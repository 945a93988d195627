#pragma once

// Small statistics helpers shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <vector>

namespace testing_stats {

/// Pearson statistic sum (o - e)^2 / e.
inline double chi_square(const std::vector<double>& observed, const std::vector<double>& expected) {
  double s = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) s += std::pow(observed[i] - expected[i], 2) / expected[i];
  return s;
}

/// Upper quantile of the chi-square distribution by the Wilson-Hilferty
/// approximation; alpha in {0.01, 0.05}.
inline double chi_square_critical(double df, double alpha) {
  const double z = alpha <= 0.01 ? 2.326347874 : 1.644853627;
  const double a = 2.0 / (9.0 * df);
  return df * std::pow(1.0 - a + z * std::sqrt(a), 3);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace testing_stats
