#pragma once

// Single-spool jet engine: four thermodynamic states, five sensors and four
// multiplicative health parameters. Internal units are SI (K, rpm, Pa, kg/s).
//
// The component flow maps and the constants below are placeholders chosen to
// give a physically plausible cruise point with time constants that suit a
// 10 ms backward-Euler step. They are not calibrated against any engine.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dpf/model.hpp"

namespace dpf::gas_turbine {

constexpr double kRpmToRad = 3.14159265358979323846 / 30.0;

struct EngineState {
  double T_CC = 0.0;   // combustion chamber temperature, K
  double S = 0.0;      // spool speed, rpm
  double P_CC = 0.0;   // combustion chamber pressure, Pa
  double P_NLT = 0.0;  // nozzle outlet pressure, Pa

  Vector to_vector() const { return (Vector(4) << T_CC, S, P_CC, P_NLT).finished(); }
  static EngineState from_vector(const Vector& v) { return {v(0), v(1), v(2), v(3)}; }
};

/// Health multipliers, healthy = 1.
struct HealthVector {
  double eta_C = 1.0;
  double m_C = 1.0;
  double eta_T = 1.0;
  double m_T = 1.0;

  Vector to_vector() const { return (Vector(4) << eta_C, m_C, eta_T, m_T).finished(); }
  static HealthVector from_vector(const Vector& v) { return {v(0), v(1), v(2), v(3)}; }
  static HealthVector healthy() { return {}; }
};

enum class Component { eta_C = 0, m_C = 1, eta_T = 2, m_T = 3 };

inline const char* component_name(Component c) {
  static const char* names[] = {"eta_C", "m_C", "eta_T", "m_T"};
  return names[static_cast<int>(c)];
}

inline Component component_from_name(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (s == component_name(static_cast<Component>(i))) return static_cast<Component>(i);
  throw ConfigError("unknown engine component '" + s + "'");
}

struct EngineConstants {
  double gamma = 1.4;
  double R = 287.0;
  double H_u = 43.0e6;
  double eta_CC = 0.98;
  double eta_mech = 0.99;
  double eta_C = 0.82;
  double eta_T = 0.85;
  double J = 0.6;           // spool inertia, kg m^2
  double V_CC = 0.6;        // m^3
  double V_M = 2.5e-3;      // effective mixer volume over gas constant
  double beta = 0.1;        // bypass ratio
  double T_diffuser = 288.0;
  double P_diffuser = 100.0e3;
  double T_M = 900.0;
  double m_cc = 0.75;       // gas mass held in the chamber, kg
  double m_fuel = 0.16;     // nominal fuel flow, kg/s

  // Flow maps.
  double mC_nominal = 10.0;  // compressor flow at the design point, kg/s
  double S_nominal = 40000.0;
  double pi_nominal = 4.0;   // design compressor pressure ratio
  double k_C = 0.3;          // compressor map slope against pressure ratio
  double k_T = 0.0;          // turbine flow capacity, kg K^0.5 / (s Pa)
  double k_N = 0.0;          // nozzle flow capacity, kg K^0.5 / (s Pa)

  double c_p() const { return gamma * R / (gamma - 1.0); }
  double c_v() const { return R / (gamma - 1.0); }
  double exponent() const { return (gamma - 1.0) / gamma; }

  void validate() const {
    const double vals[] = {R, H_u, eta_CC, eta_mech, eta_C, eta_T, J, V_CC, V_M, T_diffuser, P_diffuser,
                           T_M, m_cc, m_fuel, mC_nominal, S_nominal, pi_nominal, k_T, k_N};
    for (double v : vals)
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("engine constants must be positive and finite");
    if (!(gamma > 1.0)) throw ConfigError("heat capacity ratio must exceed 1");
    if (!(beta >= 0.0)) throw ConfigError("bypass ratio must be nonnegative");
    if (!(k_C >= 0.0)) throw ConfigError("compressor map slope must be nonnegative");
  }
};

inline void require_physical(const EngineState& x) {
  if (!(x.T_CC > 0.0) || !(x.S > 0.0) || !(x.P_CC > 0.0) || !(x.P_NLT > 0.0))
    throw DomainError("engine state must be strictly positive");
}

/// Compressor outlet temperature; the efficiency enters through 1/theta.
inline double compressor_temperature(const EngineState& x, const HealthVector& h, const EngineConstants& c) {
  const double ratio = x.P_CC / c.P_diffuser;
  if (!(ratio > 0.0)) throw DomainError("compressor pressure ratio must be positive");
  return c.T_diffuser * (1.0 + (std::pow(ratio, c.exponent()) - 1.0) / (h.eta_C * c.eta_C));
}

inline double turbine_temperature(const EngineState& x, const HealthVector& h, const EngineConstants& c) {
  const double ratio = x.P_NLT / x.P_CC;
  if (!(ratio > 0.0)) throw DomainError("turbine pressure ratio must be positive");
  return x.T_CC * (1.0 - h.eta_T * c.eta_T * (1.0 - std::pow(ratio, c.exponent())));
}

struct Flows {
  double m_C = 0.0;       // healthy-map compressor flow
  double m_T = 0.0;       // healthy-map turbine flow
  double m_nozzle = 0.0;
};

inline Flows flow_maps(const EngineState& x, const EngineConstants& c) {
  const double s = x.S / c.S_nominal;
  const double pi = x.P_CC / c.P_diffuser;
  Flows f;
  f.m_C = c.mC_nominal * s * (1.0 + c.k_C * (s * s - pi / c.pi_nominal));
  f.m_T = c.k_T * x.P_CC / std::sqrt(x.T_CC);
  f.m_nozzle = c.k_N * x.P_NLT / std::sqrt(c.T_M);
  return f;
}

/// Time derivatives of (T_CC, S, P_CC, P_NLT).
inline EngineState derivatives(const EngineState& x, const HealthVector& h, const EngineConstants& c, double fuel) {
  require_physical(x);
  const Flows f = flow_maps(x, c);
  const double mC = h.m_C * f.m_C;
  const double mT = h.m_T * f.m_T;
  const double T_C = compressor_temperature(x, h, c);
  const double T_T = turbine_temperature(x, h, c);
  const double cp = c.c_p(), cv = c.c_v();
  const double net = mC + fuel - mT;

  const double energy = (cp * T_C * mC + c.eta_CC * c.H_u * fuel - cp * x.T_CC * mT) - cv * x.T_CC * net;
  EngineState d;
  d.T_CC = energy / (cv * c.m_cc);
  d.S = (c.eta_mech * mT * cp * (x.T_CC - T_T) - mC * cp * (T_C - c.T_diffuser)) /
        (c.J * x.S * kRpmToRad * kRpmToRad);
  d.P_CC = x.P_CC / x.T_CC * d.T_CC + c.gamma * c.R * x.T_CC / c.V_CC * net;
  d.P_NLT = c.T_M / c.V_M * (mT + c.beta / (c.beta + 1.0) * mC - f.m_nozzle);
  return d;
}

/// Five sensors: compressor temperature, chamber pressure, spool speed,
/// nozzle pressure and turbine temperature.
inline Vector outputs(const EngineState& x, const HealthVector& h, const EngineConstants& c) {
  if (!(x.P_CC > 0.0) || !(x.P_NLT > 0.0) || !(c.P_diffuser > 0.0))
    throw DomainError("pressures must be positive");
  Vector y(5);
  y << compressor_temperature(x, h, c), x.P_CC, x.S, x.P_NLT, turbine_temperature(x, h, c);
  return y;
}

struct EulerResult {
  Vector x;
  std::size_t iterations = 0;
  bool converged = false;  // false means the explicit fallback was used
};

/// Implicit Euler x+ = x + dt f(x+) solved by fixed-point iteration. Falls
/// back to the explicit step when the iteration does not settle.
template <class F>
EulerResult backward_euler(const Vector& x, F&& f, double dt, std::size_t max_iter = 50, double tol = 1e-10) {
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  const Vector explicit_step = x + dt * f(x);
  EulerResult r;
  if (!explicit_step.allFinite()) throw IntegrationError("non-finite derivative");
  Vector cur = explicit_step;
  for (std::size_t k = 1; k <= max_iter; ++k) {
    Vector next = x + dt * f(cur);
    if (!next.allFinite()) throw IntegrationError("fixed-point iteration diverged");
    const double change = (next - cur).cwiseAbs().cwiseQuotient(next.cwiseAbs().cwiseMax(1e-300)).maxCoeff();
    cur = std::move(next);
    r.iterations = k;
    if (change <= tol) {
      r.x = std::move(cur);
      r.converged = true;
      return r;
    }
  }
  r.x = explicit_step;
  return r;
}

inline EulerResult step_backward_euler(const EngineState& x, const HealthVector& h, const EngineConstants& c,
                                       double fuel, double dt = 0.01) {
  auto f = [&](const Vector& v) {
    const EngineState s = EngineState::from_vector(v);
    if (!(s.T_CC > 0.0) || !(s.S > 0.0) || !(s.P_CC > 0.0) || !(s.P_NLT > 0.0))
      throw IntegrationError("iterate left the physical domain: T_CC=" + std::to_string(s.T_CC) +
                             " S=" + std::to_string(s.S) + " P_CC=" + std::to_string(s.P_CC) +
                             " P_NLT=" + std::to_string(s.P_NLT));
    return derivatives(s, h, c, fuel).to_vector();
  };
  return backward_euler(x.to_vector(), f, dt);
}

/// Operating point targets used to close the flow-map coefficients.
struct DesignPoint {
  double T_CC = 1100.0;
  double S = 40000.0;
  double P_CC = 400.0e3;
  double m_C = 10.0;
};

struct DesignResult {
  EngineConstants constants;
  EngineState equilibrium;
};

/// Picks fuel flow, turbine and nozzle capacities, chamber mass and the
/// nozzle pressure so that the healthy engine is at rest at the design point.
inline DesignResult design(const DesignPoint& p, EngineConstants c = {}) {
  c.S_nominal = p.S;
  c.mC_nominal = p.m_C;
  c.pi_nominal = p.P_CC / c.P_diffuser;
  const HealthVector h;
  EngineState x{p.T_CC, p.S, p.P_CC, 0.5 * p.P_CC};
  const double T_C = compressor_temperature(x, h, c);
  const double cp = c.c_p();
  // Energy balance with mass balance m_T = m_C + m_f.
  c.m_fuel = cp * p.m_C * (p.T_CC - T_C) / (c.eta_CC * c.H_u - cp * p.T_CC);
  const double mT = p.m_C + c.m_fuel;
  c.k_T = mT * std::sqrt(p.T_CC) / p.P_CC;
  // Spool balance fixes the turbine outlet temperature, hence P_NLT.
  const double T_T = p.T_CC - p.m_C * (T_C - c.T_diffuser) / (c.eta_mech * mT);
  const double drop = (1.0 - T_T / p.T_CC) / c.eta_T;
  if (!(drop > 0.0 && drop < 1.0)) throw ConfigError("design point admits no turbine expansion");
  x.P_NLT = p.P_CC * std::pow(1.0 - drop, 1.0 / c.exponent());
  c.k_N = (mT + c.beta / (c.beta + 1.0) * p.m_C) * std::sqrt(c.T_M) / x.P_NLT;
  c.m_cc = p.P_CC * c.V_CC / (c.R * p.T_CC);
  c.validate();
  return {c, x};
}

/// Newton search for derivatives(x) = 0 with a forward-difference Jacobian.
inline EngineState find_equilibrium(EngineState guess, const HealthVector& h, const EngineConstants& c, double fuel,
                                    std::size_t max_iter = 100, double tol = 1e-12) {
  Vector x = guess.to_vector();
  const Vector scale = x.cwiseAbs();
  auto rhs = [&](const Vector& v) -> Vector {
    return derivatives(EngineState::from_vector(v), h, c, fuel).to_vector().cwiseQuotient(scale);
  };
  for (std::size_t it = 0; it < max_iter; ++it) {
    const Vector r = rhs(x);
    if (r.cwiseAbs().maxCoeff() < tol) return EngineState::from_vector(x);
    Matrix jac(4, 4);
    for (int k = 0; k < 4; ++k) {
      Vector xp = x;
      const double e = 1e-7 * scale(k);
      xp(k) += e;
      jac.col(k) = (rhs(xp) - r) / e;
    }
    Vector dx = jac.fullPivLu().solve(-r);
    double lambda = 1.0;
    while ((x + lambda * dx).minCoeff() <= 0.0 && lambda > 1e-6) lambda *= 0.5;
    x += lambda * dx;
  }
  const Vector r = rhs(x);
  if (r.cwiseAbs().maxCoeff() > 1e-8) throw IntegrationError("equilibrium search did not converge");
  return EngineState::from_vector(x);
}

enum class Profile { step, drift };

struct FaultEvent {
  double start = 0.0;
  Component component = Component::eta_C;
  Profile profile = Profile::step;
  double magnitude = 0.0;  // fractional loss of effectiveness
  double ramp_end = 0.0;   // drift only
};

struct FaultScenario {
  std::string name;
  std::vector<FaultEvent> events;
  double duration = 24.0;
  double fuel_step_time = 1.0;
  double fuel_step = -0.02;  // relative change of the fuel flow

  void validate() const {
    if (!(duration > 0.0)) throw ConfigError("scenario duration must be positive");
    for (const auto& e : events) {
      if (!(e.start >= 0.0)) throw ConfigError("fault start must be nonnegative");
      if (!(e.magnitude >= 0.0 && e.magnitude <= 0.5)) throw ConfigError("fault magnitude must lie in [0, 0.5]");
      if (e.profile == Profile::drift && !(e.ramp_end > e.start)) throw ConfigError("drift needs ramp_end > start");
    }
  }
};

/// Health multipliers at time t. Overlapping events on one component multiply.
inline HealthVector health_at(const FaultScenario& sc, double t) {
  std::array<double, 4> m{1.0, 1.0, 1.0, 1.0};
  for (const auto& e : sc.events) {
    if (t < e.start) continue;
    double loss = e.magnitude;
    if (e.profile == Profile::drift && t < e.ramp_end) loss *= (t - e.start) / (e.ramp_end - e.start);
    m[static_cast<int>(e.component)] *= 1.0 - loss;
  }
  return {m[0], m[1], m[2], m[3]};
}

inline double fuel_at(const FaultScenario& sc, const EngineConstants& c, double t) {
  return c.m_fuel * (t >= sc.fuel_step_time ? 1.0 + sc.fuel_step : 1.0);
}

/// Sequential 5% steps on each component, one every five seconds from 4 s.
inline FaultScenario scenario_concurrent() {
  FaultScenario sc;
  sc.name = "scenario_I_concurrent";
  sc.duration = 24.0;
  sc.events = {{4.0, Component::eta_C, Profile::step, 0.05, 0.0},
               {9.0, Component::m_C, Profile::step, 0.05, 0.0},
               {14.0, Component::eta_T, Profile::step, 0.05, 0.0},
               {19.0, Component::m_T, Profile::step, 0.05, 0.0}};
  return sc;
}

/// Efficiency drifts (5% compressor, 3% turbine over 9..19 s) with 5% flow
/// capacity steps at 9 s.
inline FaultScenario scenario_simultaneous() {
  FaultScenario sc;
  sc.name = "scenario_II_simultaneous";
  sc.duration = 19.0;
  sc.events = {{9.0, Component::eta_C, Profile::drift, 0.05, 19.0},
               {9.0, Component::m_C, Profile::step, 0.05, 0.0},
               {9.0, Component::eta_T, Profile::drift, 0.03, 19.0},
               {9.0, Component::m_T, Profile::step, 0.05, 0.0}};
  return sc;
}

struct EstimationModelOptions {
  double dt = 0.01;
  double process_std = 5e-4;      // per-unit, per step
  double measurement_std = 2e-3;  // per-unit
  double theta_lower = 1e-6;
  double theta_upper = 1.2;
};

/// Engine model in per-unit coordinates: states are divided by the design
/// equilibrium and outputs by the healthy design outputs. The fuel schedule
/// follows the scenario; parameters are the four health multipliers.
inline ModelSpec estimation_model(const DesignResult& d, const FaultScenario& sc, const EstimationModelOptions& o = {}) {
  const EngineConstants c = d.constants;
  const Vector x_ref = d.equilibrium.to_vector();
  const Vector y_ref = outputs(d.equilibrium, HealthVector{}, c);
  ModelSpec m;
  m.name = "gas_turbine";
  m.n_x = 4;
  m.n_theta = 4;
  m.n_y = 5;
  m.transition = [c, x_ref, sc, o](std::size_t step, const Vector& x, const Vector& theta, const Vector& noise) {
    const double t = static_cast<double>(step) * o.dt;
    const EngineState phys = EngineState::from_vector(x.cwiseProduct(x_ref));
    EulerResult r = step_backward_euler(phys, HealthVector::from_vector(theta), c, fuel_at(sc, c, t), o.dt);
    return Vector(r.x.cwiseQuotient(x_ref) + noise);
  };
  m.output = [c, x_ref, y_ref](const Vector& x, const Vector& theta) {
    const EngineState phys = EngineState::from_vector(x.cwiseProduct(x_ref));
    return Vector(outputs(phys, HealthVector::from_vector(theta), c).cwiseQuotient(y_ref));
  };
  m.process_noise_cov = Matrix::Identity(4, 4) * o.process_std * o.process_std;
  m.measurement_noise_cov = Matrix::Identity(5, 5) * o.measurement_std * o.measurement_std;
  m.param_domain = {Vector::Constant(4, o.theta_lower), Vector::Constant(4, o.theta_upper)};
  return m;
}

/// Health trajectory sampled at each filter step (index k covers t = k dt).
inline std::vector<Vector> health_trajectory(const FaultScenario& sc, std::size_t steps, double dt = 0.01) {
  std::vector<Vector> out;
  out.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) out.push_back(health_at(sc, static_cast<double>(k) * dt).to_vector());
  return out;
}

}  // namespace dpf::gas_turbine
