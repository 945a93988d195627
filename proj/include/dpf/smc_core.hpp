#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "dpf/errors.hpp"
#include "dpf/linalg.hpp"
#include "dpf/random.hpp"

namespace dpf {

/// N particles (one per column) with a weight simplex.
struct ParticleEnsemble {
  Matrix particles;  // d x N
  Vector weights;    // N

  Eigen::Index size() const { return particles.cols(); }
  Eigen::Index dim() const { return particles.rows(); }

  static ParticleEnsemble uniform(Matrix particles) {
    const auto n = particles.cols();
    return {std::move(particles), Vector::Constant(n, 1.0 / static_cast<double>(n))};
  }

  Vector mean() const { return weighted_mean(particles, weights); }

  void validate() const {
    if (particles.cols() < 1) throw ConfigError("ensemble needs at least one particle");
    if (weights.size() != particles.cols()) throw ConfigError("weight count does not match particle count");
    if (!particles.allFinite()) throw FilterDivergence(0, "non-finite particle component");
    if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9)
      throw DegenerateWeights("weights are not a normalized simplex");
  }
};

inline Vector normalize_weights(const Vector& raw) {
  if (raw.size() == 0) throw DegenerateWeights("empty weight vector");
  if (!raw.allFinite() || (raw.array() < 0.0).any())
    throw DegenerateWeights("weights must be finite and nonnegative");
  const double total = raw.sum();
  if (!(total > 0.0)) throw DegenerateWeights("all weights are zero");
  return raw / total;
}

/// Normalizes log-weights after shifting by their maximum, so a common
/// underflow of every likelihood does not wipe out the simplex. Entries of
/// -inf receive zero weight; all -inf (or NaN) is degenerate.
inline Vector normalize_log_weights(const Vector& log_w) {
  if (log_w.size() == 0) throw DegenerateWeights("empty weight vector");
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < log_w.size(); ++i) {
    if (std::isnan(log_w(i))) throw DegenerateWeights("NaN log-likelihood");
    peak = std::max(peak, log_w(i));
  }
  if (!std::isfinite(peak)) throw DegenerateWeights("all likelihoods are zero");
  return normalize_weights((log_w.array() - peak).exp().matrix());
}

inline double effective_sample_size(const Vector& weights) { return 1.0 / weights.squaredNorm(); }

/// True when one particle carries essentially all the mass.
inline bool weights_collapsed(const Vector& weights) { return weights.maxCoeff() > 1.0 - 1e-12; }

namespace detail {

inline std::size_t draw_index(const std::vector<double>& cumulative, double u) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  std::size_t k = static_cast<std::size_t>(it - cumulative.begin());
  if (k >= cumulative.size()) {
    // u fell on the rounding gap above the last partial sum: take the last
    // index with positive mass.
    k = cumulative.size() - 1;
    while (k > 0 && cumulative[k] == cumulative[k - 1]) --k;
  }
  return k;
}

inline std::vector<double> cumulative_sum(const Vector& w) {
  std::vector<double> c(static_cast<std::size_t>(w.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) c[static_cast<std::size_t>(i)] = (acc += w(i));
  return c;
}

}  // namespace detail

/// Multinomial resampling: n i.i.d. draws with P(k) = w_k.
inline std::vector<std::size_t> resample_bootstrap(const Vector& weights, std::size_t n, Rng& rng) {
  const auto cum = detail::cumulative_sum(weights);
  const double total = cum.back();
  std::uniform_real_distribution<double> unif(0.0, total);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = detail::draw_index(cum, unif(rng));
  return idx;
}

inline std::vector<std::size_t> resample_bootstrap(const Vector& weights, Rng& rng) {
  return resample_bootstrap(weights, static_cast<std::size_t>(weights.size()), rng);
}

/// Residual resampling: floor(n w_k) deterministic copies of each k, the
/// remaining slots drawn multinomially from the fractional residuals.
inline std::vector<std::size_t> resample_residual(const Vector& weights, std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx;
  idx.reserve(n);
  Vector residual(weights.size());
  const double nn = static_cast<double>(n);
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    const double scaled = nn * weights(k);
    const auto copies = static_cast<std::size_t>(std::floor(scaled + 1e-12));
    for (std::size_t c = 0; c < copies && idx.size() < n; ++c) idx.push_back(static_cast<std::size_t>(k));
    residual(k) = std::max(scaled - static_cast<double>(copies), 0.0);
  }
  const std::size_t remaining = n - idx.size();
  if (remaining > 0) {
    if (!(residual.sum() > 0.0)) residual = weights;
    for (std::size_t k : resample_bootstrap(residual, remaining, rng)) idx.push_back(k);
  }
  return idx;
}

inline std::vector<std::size_t> resample_residual(const Vector& weights, Rng& rng) {
  return resample_residual(weights, static_cast<std::size_t>(weights.size()), rng);
}

inline Matrix gather_columns(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Matrix z(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = normal(rng);
  return z;
}

/// n zero-mean draws (columns) with covariance `cov`.
inline Matrix sample_gaussian(const Matrix& cov, std::size_t n, Rng& rng) {
  const Matrix factor = psd_sqrt(cov);
  return factor * standard_normal(cov.rows(), static_cast<Eigen::Index>(n), rng);
}

// --------------------------------------------------------------------------
// Regularization

enum class Kernel { gaussian, epanechnikov };

struct RegularizationConfig {
  std::size_t n_reg = 16;
  double bandwidth = 0.0;  // <= 0 selects default_bandwidth(N, d)
  Kernel kernel = Kernel::gaussian;

  void validate() const {
    if (n_reg < 2) throw ConfigError("regularization grid needs at least 2 points");
    if (bandwidth < 0.0 || !std::isfinite(bandwidth)) throw ConfigError("bandwidth must be positive");
  }
};

/// Gaussian-kernel optimal bandwidth (4 / (N (d + 2)))^(1 / (d + 4)).
inline double default_bandwidth(std::size_t n, std::size_t d) {
  const double dd = static_cast<double>(d);
  return std::pow(4.0 / (static_cast<double>(n) * (dd + 2.0)), 1.0 / (dd + 4.0));
}

/// Unit-variance kernel density.
inline double kernel_density(Kernel k, double u) {
  if (k == Kernel::gaussian) return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
  const double s5 = std::sqrt(5.0);
  return std::abs(u) <= s5 ? 0.75 / s5 * (1.0 - u * u / 5.0) : 0.0;
}

inline double kernel_draw(Kernel k, Rng& rng) {
  if (k == Kernel::gaussian) return std::normal_distribution<double>{}(rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double e = (std::abs(u3) >= std::abs(u2) && std::abs(u3) >= std::abs(u1)) ? u2 : u3;
  return std::sqrt(5.0) * e;
}

/// Per-dimension uniform grid spanning [min - std, max + std] with n_reg
/// points; std is the population standard deviation.
struct RegularizationGrid {
  Vector first;   // per dimension
  Vector last;
  Vector spacing;
  std::size_t points = 0;

  double at(Eigen::Index dim, std::size_t l) const { return first(dim) + static_cast<double>(l) * spacing(dim); }
};

inline RegularizationGrid make_regularization_grid(const Matrix& coords, std::size_t n_reg) {
  if (n_reg < 2) throw ConfigError("regularization grid needs at least 2 points");
  RegularizationGrid g;
  g.points = n_reg;
  const auto d = coords.rows();
  g.first.resize(d);
  g.last.resize(d);
  g.spacing.resize(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto row = coords.row(k);
    const double mean = row.mean();
    const double sd = std::sqrt((row.array() - mean).square().mean());
    g.first(k) = row.minCoeff() - sd;
    g.last(k) = row.maxCoeff() + sd;
    g.spacing(k) = (g.last(k) - g.first(k)) / static_cast<double>(n_reg - 1);
  }
  return g;
}

struct RegularizationResult {
  Matrix particles;                     // d x N, equally weighted
  std::vector<std::size_t> ancestors;   // selected source particle per output
  RegularizationGrid grid;              // in whitened coordinates
  Matrix grid_density;                  // d x n_reg, weighted kernel mixture on the grid
  std::vector<bool> passthrough;        // whitened dimensions with zero spread
  double bandwidth = 0.0;
};

/// Regularized resampling. Particles are whitened with the pseudo-inverse of
/// `whitening` (A with A A^T = Sigma), the kernel mixture is evaluated on the
/// grid of each whitened dimension, and N particles are drawn from that
/// continuous density: bootstrap selection by weight followed by a kernel
/// jitter of scale b, restricted to the grid support and mapped back by A.
inline RegularizationResult regularize(const ParticleEnsemble& ens, const Matrix& whitening,
                                       const RegularizationConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto d = ens.dim();
  const auto n = ens.size();
  RegularizationResult out;
  out.bandwidth = cfg.bandwidth > 0.0 ? cfg.bandwidth
                                      : default_bandwidth(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  const double b = out.bandwidth;

  const Matrix a_pinv = whitening.completeOrthogonalDecomposition().pseudoInverse();
  const Matrix z = a_pinv * ens.particles;
  out.grid = make_regularization_grid(z, cfg.n_reg);

  out.passthrough.assign(static_cast<std::size_t>(d), false);
  for (Eigen::Index k = 0; k < d; ++k)
    out.passthrough[static_cast<std::size_t>(k)] = !(out.grid.last(k) - out.grid.first(k) > 0.0) ||
                                                    (z.row(k).maxCoeff() - z.row(k).minCoeff()) <= 0.0;

  out.grid_density = Matrix::Zero(d, static_cast<Eigen::Index>(cfg.n_reg));
  for (Eigen::Index k = 0; k < d; ++k) {
    if (out.passthrough[static_cast<std::size_t>(k)]) continue;
    for (std::size_t l = 0; l < cfg.n_reg; ++l) {
      const double g = out.grid.at(k, l);
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) acc += ens.weights(i) * kernel_density(cfg.kernel, (g - z(k, i)) / b);
      out.grid_density(k, static_cast<Eigen::Index>(l)) = acc / b;
    }
  }

  out.ancestors = resample_bootstrap(ens.weights, static_cast<std::size_t>(n), rng);
  out.particles.resize(d, n);
  Vector jitter(d);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto src = static_cast<Eigen::Index>(out.ancestors[static_cast<std::size_t>(j)]);
    for (Eigen::Index k = 0; k < d; ++k) {
      jitter(k) = 0.0;
      if (out.passthrough[static_cast<std::size_t>(k)]) continue;
      const double lo = out.grid.first(k), hi = out.grid.last(k);
      double e = b * kernel_draw(cfg.kernel, rng);
      for (int tries = 0; tries < 16 && (z(k, src) + e < lo || z(k, src) + e > hi); ++tries)
        e = b * kernel_draw(cfg.kernel, rng);
      jitter(k) = std::clamp(z(k, src) + e, lo, hi) - z(k, src);
    }
    out.particles.col(j) = ens.particles.col(src) + whitening * jitter;
  }
  return out;
}

}  // namespace dpf

namespace dpf {

/// Zero-mean multivariate normal log-density with a fixed covariance.
class GaussianLikelihood {
public:
  explicit GaussianLikelihood(const Matrix& cov) : llt_(cov) {
    if (llt_.info() != Eigen::Success) throw CovarianceError("likelihood covariance is not positive definite");
    const Matrix l = llt_.matrixL();
    log_norm_ = -0.5 * static_cast<double>(cov.rows()) * std::log(2.0 * std::numbers::pi) -
                l.diagonal().array().log().sum();
  }

  double log_density(const Vector& residual) const {
    const Vector w = llt_.matrixL().solve(residual);
    return log_norm_ - 0.5 * w.squaredNorm();
  }

private:
  Eigen::LLT<Matrix> llt_;
  double log_norm_ = 0.0;
};

}  // namespace dpf
