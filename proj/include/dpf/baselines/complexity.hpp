#pragma once

// Equivalent-flop (EF) accounting for the dual filter and the two baselines,
// plus particle-budget matching between methods.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dpf/errors.hpp"

namespace dpf::complexity {

struct CostModel {
  double n_x = 0, n_theta = 0, n_y = 0;
  double c1 = 0, c2 = 0, c3 = 0;  // random numbers, resampling, regularization
  double N = 0;

  void validate() const {
    if (!(n_x > 0 && n_theta > 0 && n_y > 0)) throw ConfigError("EF dimensions must be positive");
    if (!(c1 >= 0 && c2 >= 0 && c3 >= 0)) throw ConfigError("EF cost constants must be nonnegative");
    if (!(N >= 0)) throw ConfigError("particle count must be nonnegative");
  }
};

enum class Method { dual, bayesian, rml };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::dual: return "dual";
    case Method::bayesian: return "bayesian";
    case Method::rml: return "rml";
  }
  return "?";
}

inline Method method_from_name(const std::string& s) {
  if (s == "dual") return Method::dual;
  if (s == "bayesian") return Method::bayesian;
  if (s == "rml") return Method::rml;
  throw ConfigError("unknown method '" + s + "'");
}

/// Per-particle coefficient of the dominant (N-proportional) EF cost.
inline double per_particle(Method m, const CostModel& c) {
  const double nx = c.n_x, nt = c.n_theta, ny = c.n_y;
  switch (m) {
    case Method::dual:
      return 3 * nx * nx + 5 * nt * nt + 6 * nt + 2 * nt * ny + 7 * ny + 3 * nx + c.c1 * (nx + nt) +
             c.c2 * (nx + nt) + c.c3 * nx;
    case Method::bayesian: {
      const double k = 1 + c.c1 + c.c2 + c.c3;
      return 3 * nx * nx + 3 * nt * nt + 6 * nx * nt + k * nx + k * nt + ny;
    }
    case Method::rml:
      return 2 * nx * nx + 4 * nt + 2 * nx + c.c1 * (2 * nx + nt) + c.c2 * nx + c.c3 * nx;
  }
  return 0.0;
}

/// Dominant EF cost N * per_particle.
inline double ef_complexity(Method m, const CostModel& c) {
  c.validate();
  return c.N * per_particle(m, c);
}

/// One instruction of a per-step cost table: multiplications, additions,
/// function evaluations and other operations.
struct CostRow {
  std::string instruction;
  std::function<double(const CostModel&)> mult, add, func, other;

  double total(const CostModel& c) const {
    auto v = [&](const std::function<double(const CostModel&)>& f) { return f ? f(c) : 0.0; };
    return v(mult) + v(add) + v(func) + v(other);
  }
};

using CostTable = std::vector<CostRow>;

inline double table_total(const CostTable& t, const CostModel& c) {
  double s = 0.0;
  for (const auto& r : t) s += r.total(c);
  return s;
}

/// N-proportional part of a table total (every row is affine in N).
inline double table_n_terms(const CostTable& t, CostModel c) {
  const double full = table_total(t, c);
  c.N = 0;
  return full - table_total(t, c);
}

using C = const CostModel&;

inline CostTable dual_state_table() {
  return {
      {"schur of predicted covariance", {}, {}, {}, [](C c) { return 10 * std::pow(c.n_x, 3); }},
      {"randn(n_x, N)", {}, {}, {}, [](C c) { return c.N * c.n_x * c.c1; }},
      {"process noise draw",
       [](C c) { return std::pow(c.n_x, 3) + c.N * c.n_x * c.n_x; },
       [](C c) { return (c.n_x - 1) * c.n_x * c.n_x + c.N * (c.n_x - 1) * c.n_x; }, {},
       [](C c) { return c.n_x * c.n_x; }},
      {"state transition", {}, {}, [](C c) { return c.N * c.n_x; }, {}},
      {"predicted outputs", {}, {}, [](C c) { return c.N * c.n_y; }, {}},
      {"prior covariance", [](C c) { return c.N * c.n_x * c.n_x; }, [](C c) { return 2 * c.N * c.n_x; }, {}, {}},
      {"regularization and resampling", {}, {}, {}, [](C c) { return c.N * c.n_x * c.c2 + c.N * c.n_x * c.c3; }},
      {"posterior mean", [](C c) { return c.n_x; }, [](C c) { return c.N * c.n_x; }, {}, {}},
  };
}

inline CostTable dual_param_table() {
  return {
      {"candidate outputs", {}, {}, [](C c) { return c.N * c.n_y; }, {}},
      {"kernel covariance", [](C c) { return std::pow(c.n_theta, 3); },
       [](C c) { return (c.n_theta - 1) * c.n_theta * c.n_theta + c.n_theta * c.n_theta; }, {}, {}},
      {"prediction errors", {}, [](C c) { return c.N * c.n_y; }, {}, {}},
      {"output Jacobian", {}, {}, [](C c) { return c.n_y * c.n_theta; }, {}},
      {"adaptive gain", [](C c) { return c.N + c.N * c.n_y; }, [](C c) { return c.N * (c.n_y - 1) + c.N * c.n_y; }, {},
       {}},
      {"schur of kernel covariance", {}, {}, {}, [](C c) { return 10 * std::pow(c.n_theta, 3); }},
      {"randn(n_theta, N)", {}, {}, {}, [](C c) { return c.N * c.n_theta * c.c1; }},
      {"kernel noise draw", [](C c) { return std::pow(c.n_theta, 3) + c.N * c.n_theta * c.n_theta; },
       [](C c) { return (c.n_theta - 1) * c.n_theta * c.n_theta + c.N * (c.n_theta - 1) * c.n_theta; },
       [](C c) { return c.n_theta * c.n_theta; }, {}},
      {"gradient step", [](C c) { return c.N * (c.n_y * c.n_theta + c.n_theta); },
       [](C c) { return c.N * (c.n_y - 1) * c.n_theta + c.N * c.n_theta; }, {}, {}},
      {"shrinkage", [](C c) { return c.N * c.n_theta * c.n_theta + c.n_theta; },
       [](C c) {
         return c.N * c.n_theta * c.n_theta + 2 * c.N * c.n_theta + c.N * c.n_theta + c.n_theta * c.n_theta;
       },
       {}, {}},
      {"intermediate outputs", {}, {}, [](C c) { return c.N * c.n_y; }, {}},
      {"resampling", {}, {}, {}, [](C c) { return c.N * c.n_theta * c.c2; }},
      {"posterior mean", [](C c) { return c.n_theta; }, [](C c) { return c.N * c.n_theta; }, {}, {}},
      {"posterior covariance", [](C c) { return c.N * c.n_theta * c.n_theta; }, [](C c) { return 2 * c.N * c.n_theta; },
       {}, {}},
  };
}

inline CostTable bayesian_table() {
  auto s = [](C c) { return c.n_x + c.n_theta; };
  return {
      {"schur of augmented covariance", {}, {}, {}, [s](C c) { return 10 * std::pow(s(c), 3); }},
      {"randn(n_x + n_theta, N)", {}, {}, {}, [s](C c) { return c.N * s(c) * c.c1; }},
      {"augmented noise draw", [s](C c) { return std::pow(s(c), 3) + c.N * s(c) * s(c); },
       [s](C c) { return (s(c) - 1) * s(c) * s(c) + c.N * (s(c) - 1) * s(c); }, {},
       [s](C c) { return s(c) * s(c); }},
      {"parameter noise scaling", [](C c) { return std::pow(c.n_theta, 3); },
       [](C c) { return (c.n_theta - 1) * c.n_theta * c.n_theta + c.n_theta * c.n_theta; }, {}, {}},
      {"augmented transition", {}, {}, [s](C c) { return c.N * s(c); }, {}},
      {"predicted outputs", {}, {}, [](C c) { return c.N * c.n_y; }, {}},
      {"augmented covariance", [s](C c) { return c.N * s(c) * s(c); }, [s](C c) { return 2 * c.N * s(c); }, {}, {}},
      {"regularization and resampling", {}, {}, {}, [s](C c) { return c.N * s(c) * (c.c3 + c.c2); }},
      {"posterior means", [s](C c) { return s(c); }, [s](C c) { return c.N * s(c); }, {}, {}},
  };
}

inline CostTable rml_table() {
  return {
      {"schur of state covariance", {}, {}, {}, [](C c) { return 10 * std::pow(c.n_x, 3); }},
      {"randn(n_x, N)", {}, {}, {}, [](C c) { return c.N * c.n_x * c.c1; }},
      {"process noise draw", [](C c) { return std::pow(c.n_x, 3) + c.N * c.n_x * c.n_x; },
       [](C c) { return (c.n_x - 1) * c.n_x * c.n_x + c.N * (c.n_x - 1) * c.n_x; }, {},
       [](C c) { return c.n_x * c.n_x; }},
      {"perturbation vector", {}, {}, {}, [](C c) { return c.n_theta * c.c1; }},
      {"plus branch transition", {}, {}, {}, [](C c) { return c.N * c.n_x; }},
      {"minus branch transition", {}, {}, {}, [](C c) { return c.N * c.n_x; }},
      {"branch random numbers", {}, {}, {}, [](C c) { return c.N * (c.n_x + c.n_theta) * c.c1; }},
      {"incremental likelihoods", {}, {}, {}, [](C c) { return 2 * c.N * c.n_theta; }},
      {"gradient estimate", [](C c) { return c.n_theta + 1; }, [](C c) { return 2 * c.n_theta - 1; }, {}, {}},
      {"branch log-likelihoods", [](C c) { return 2 * c.n_theta; }, [](C c) { return 2 * c.N * c.n_theta; },
       [](C c) { return 2 * c.n_theta; }, {}},
      {"parameter update", [](C c) { return c.n_theta * c.n_theta; },
       [](C c) { return c.n_theta + (c.n_theta - 1) * c.n_theta; }, {}, {}},
      {"state transition", {}, {}, [](C c) { return c.N * c.n_x; }, {}},
      {"regularization and resampling", {}, {}, {}, [](C c) { return c.N * c.n_x * (c.c2 + c.c3); }},
  };
}

/// Dual particle count with the same cost as a Bayesian filter of n_b
/// particles, using the closed-form budget expression.
inline double dual_budget_from_bayesian(double n_b, CostModel c) {
  c.validate();
  const double nx = c.n_x, nt = c.n_theta, ny = c.n_y;
  const double num = 2 * nt * nt + 5 * nt + 2 * nt * ny + 6 * ny + 2 * nt - 6 * nx * nt - c.c3 * nt;
  const double n = n_b * (1.0 - num / per_particle(Method::dual, c));
  if (!(n > 0.0)) throw BudgetError("budget equation gives a nonpositive particle count");
  return n;
}

/// Same for an RML filter of n_m particles.
inline double dual_budget_from_rml(double n_m, CostModel c) {
  c.validate();
  const double nx = c.n_x, nt = c.n_theta, ny = c.n_y;
  const double num = nx * nx + 5 * nt * nt + 2 * nt + nx + 2 * nt * ny + 7 * ny + c.c2 * nt;
  const double n = n_m * (1.0 - num / per_particle(Method::dual, c));
  if (!(n > 0.0)) throw BudgetError("budget equation gives a nonpositive particle count");
  return n;
}

/// Multiplier k with N = k * N_ref for the closed-form budget expressions.
inline double budget_factor(Method reference, const CostModel& c) {
  switch (reference) {
    case Method::bayesian: return dual_budget_from_bayesian(1.0, c);
    case Method::rml: return dual_budget_from_rml(1.0, c);
    case Method::dual: return 1.0;
  }
  return 1.0;
}

/// Reference-method particle count matching a dual filter of n particles,
/// rounded to the nearest integer (at least 2).
inline long match_particle_budget(Method reference, double n_dual, const CostModel& c) {
  if (!(n_dual > 0.0)) throw BudgetError("dual particle count must be positive");
  const double k = budget_factor(reference, c);
  const long n = std::lround(n_dual / k);
  if (n < 2) throw BudgetError("matched particle count is below 2");
  return n;
}

/// Budget matching that equates the dominant EF totals exactly.
inline long match_particle_budget_exact(Method reference, double n_dual, const CostModel& c) {
  c.validate();
  const long n = std::lround(n_dual * per_particle(Method::dual, c) / per_particle(reference, c));
  if (n < 2) throw BudgetError("matched particle count is below 2");
  return n;
}

}  // namespace dpf::complexity
