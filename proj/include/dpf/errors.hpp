#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpf {

// Base of every error thrown by the library. `kind()` is a stable
// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

class DegenerateWeights : public Error {
public:
  explicit DegenerateWeights(const std::string& what, std::string source = {})
      : Error("degenerate_weights", source.empty() ? what : source + ": " + what),
        source_(std::move(source)) {}
  const std::string& source() const noexcept { return source_; }

private:
  std::string source_;
};

class CovarianceError : public Error {
public:
  explicit CovarianceError(const std::string& what) : Error("covariance", what) {}
};

class SimulationDivergence : public Error {
public:
  SimulationDivergence(std::size_t step, const std::string& what)
      : Error("simulation_divergence", what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

class FilterDivergence : public Error {
public:
  FilterDivergence(std::size_t particle, const std::string& what, std::string source = {})
      : Error("filter_divergence",
              (source.empty() ? "" : source + ": ") + what + " at particle " + std::to_string(particle)),
        particle_(particle), detail_(what), source_(std::move(source)) {}
  std::size_t particle() const noexcept { return particle_; }
  const std::string& detail() const noexcept { return detail_; }
  const std::string& source() const noexcept { return source_; }

private:
  std::size_t particle_;
  std::string detail_;
  std::string source_;
};

class DomainError : public Error {
public:
  explicit DomainError(const std::string& what) : Error("domain", what) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class IntegrationError : public Error {
public:
  explicit IntegrationError(const std::string& what) : Error("integration", what) {}
};

class CalibrationError : public Error {
public:
  explicit CalibrationError(const std::string& what) : Error("calibration", what) {}
};

class BudgetError : public Error {
public:
  explicit BudgetError(const std::string& what) : Error("budget", what) {}
};

class UndefinedMetric : public Error {
public:
  explicit UndefinedMetric(const std::string& what) : Error("undefined_metric", what) {}
};

}  // namespace dpf
