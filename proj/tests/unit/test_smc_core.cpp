#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "dpf/smc_core.hpp"
#include "stats.hpp"

using namespace dpf;

TEST(NormalizeWeights, UniformInputStaysUniform) {
  const Vector w = normalize_weights(Vector::Ones(4));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w(i), 0.25);
}

TEST(NormalizeWeights, SingleSurvivor) {
  Vector raw(3);
  raw << 2, 0, 0;
  const Vector w = normalize_weights(raw);
  EXPECT_DOUBLE_EQ(w(0), 1.0);
  EXPECT_DOUBLE_EQ(w(1), 0.0);
  EXPECT_DOUBLE_EQ(w(2), 0.0);
}

TEST(NormalizeWeights, AllZeroIsDegenerate) {
  EXPECT_THROW(normalize_weights(Vector::Zero(3)), DegenerateWeights);
}

TEST(NormalizeWeights, NegativeIsRejected) {
  Vector raw(2);
  raw << 1, -1;
  EXPECT_THROW(normalize_weights(raw), DegenerateWeights);
}

TEST(NormalizeLogWeights, SurvivesCommonUnderflow) {
  Vector lw(3);
  lw << -2000, -2001, -2002;
  const Vector w = normalize_log_weights(lw);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
  EXPECT_NEAR(w(0) / w(1), std::exp(1.0), 1e-9);
}

TEST(NormalizeLogWeights, AllMinusInfinityIsDegenerate) {
  EXPECT_THROW(normalize_log_weights(Vector::Constant(2, -std::numeric_limits<double>::infinity())),
               DegenerateWeights);
}

TEST(EffectiveSampleSize, UniformAndPointMass) {
  EXPECT_NEAR(effective_sample_size(Vector::Constant(10, 0.1)), 10.0, 1e-12);
  Vector w = Vector::Zero(5);
  w(2) = 1.0;
  EXPECT_NEAR(effective_sample_size(w), 1.0, 1e-12);
  EXPECT_TRUE(weights_collapsed(w));
}

TEST(ResampleBootstrap, PointMassSelectsOnlyThatIndex) {
  Vector w(3);
  w << 1, 0, 0;
  Rng rng = make_rng(1);
  for (auto i : resample_bootstrap(w, 100, rng)) EXPECT_EQ(i, 0u);
}

TEST(ResampleBootstrap, FixedSeedIsReproducible) {
  Vector w(2);
  w << 0.5, 0.5;
  Rng a = make_rng(9), b = make_rng(9);
  EXPECT_EQ(resample_bootstrap(w, 50, a), resample_bootstrap(w, 50, b));
}

TEST(ResampleBootstrap, UniformFrequenciesPassChiSquare) {
  const std::size_t n = 10000;
  Rng rng = make_rng(2024);
  const auto idx = resample_bootstrap(Vector::Constant(n, 1.0 / n), n, rng);
  std::vector<double> counts(n, 0.0);
  for (auto i : idx) {
    ASSERT_LT(i, n);
    counts[i] += 1.0;
  }
  const double stat = testing_stats::chi_square(counts, std::vector<double>(n, 1.0));
  EXPECT_LT(stat, testing_stats::chi_square_critical(static_cast<double>(n - 1), 0.01));
}

TEST(ResampleResidual, DeterministicPartExhaustsN) {
  Vector w(2);
  w << 0.5, 0.5;
  Rng rng = make_rng(3);
  auto idx = resample_residual(w, 2, rng);
  std::sort(idx.begin(), idx.end());
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1}));
}

TEST(ResampleResidual, IntegralCountsAreExact) {
  Vector w(2);
  w << 0.75, 0.25;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng = make_rng(s);
    const auto idx = resample_residual(w, 4, rng);
    EXPECT_EQ(std::count(idx.begin(), idx.end(), 0u), 3);
    EXPECT_EQ(std::count(idx.begin(), idx.end(), 1u), 1);
  }
}

TEST(ResampleResidual, FractionalCountsAverageToNw) {
  Vector w(2);
  w << 0.6, 0.4;
  double total = 0.0;
  const int seeds = 4000;
  for (int s = 0; s < seeds; ++s) {
    Rng rng = make_rng(static_cast<std::uint64_t>(s), 5);
    const auto idx = resample_residual(w, 5, rng);
    ASSERT_EQ(idx.size(), 5u);
    const auto c0 = std::count(idx.begin(), idx.end(), 0u);
    EXPECT_TRUE(c0 == 3 || c0 == 4);
    total += static_cast<double>(c0);
  }
  EXPECT_NEAR(total / seeds, 3.0, 0.05);
}

// Both schemes are unbiased and residual counts vary no more than bootstrap
// counts on the same weights.
TEST(Resampling, UnbiasedAndResidualHasLowerVariance) {
  Vector w(4);
  w << 0.1, 0.2, 0.3, 0.4;
  const std::size_t n = 10;
  const int seeds = 1000;
  std::vector<double> sum_b(4, 0), sum_r(4, 0), sq_b(4, 0), sq_r(4, 0);
  for (int s = 0; s < seeds; ++s) {
    Rng rb = make_rng(static_cast<std::uint64_t>(s), 1), rr = make_rng(static_cast<std::uint64_t>(s), 2);
    std::vector<double> cb(4, 0), cr(4, 0);
    for (auto i : resample_bootstrap(w, n, rb)) cb[i] += 1;
    for (auto i : resample_residual(w, n, rr)) cr[i] += 1;
    for (int k = 0; k < 4; ++k) {
      sum_b[k] += cb[k];
      sum_r[k] += cr[k];
      sq_b[k] += cb[k] * cb[k];
      sq_r[k] += cr[k] * cr[k];
    }
  }
  for (int k = 0; k < 4; ++k) {
    const double expected = n * w(k);
    const double sd = std::sqrt(n * w(k) * (1 - w(k)) / seeds);
    EXPECT_NEAR(sum_b[k] / seeds, expected, 4 * sd);
    EXPECT_NEAR(sum_r[k] / seeds, expected, 4 * sd);
    const double var_b = sq_b[k] / seeds - std::pow(sum_b[k] / seeds, 2);
    const double var_r = sq_r[k] / seeds - std::pow(sum_r[k] / seeds, 2);
    EXPECT_LE(var_r, var_b);
  }
}

TEST(SampleGaussian, ZeroCovarianceGivesZeros) {
  Rng rng = make_rng(1);
  EXPECT_TRUE(sample_gaussian(Matrix::Zero(3, 3), 20, rng).isZero());
}

TEST(SampleGaussian, EmpiricalCovarianceMatches) {
  Rng rng = make_rng(77);
  const Matrix s = sample_gaussian(Matrix::Identity(2, 2), 100000, rng);
  const Matrix c = sample_covariance(s);
  EXPECT_LT((c - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(SampleGaussian, NegativeEigenvalueIsRejected) {
  Matrix c(2, 2);
  c << 1, 2, 2, 1;
  Rng rng = make_rng(1);
  EXPECT_THROW(sample_gaussian(c, 5, rng), CovarianceError);
}

TEST(RegularizationGrid, TwoPointExample) {
  Matrix x(1, 2);
  x << 0, 1;
  const auto g = make_regularization_grid(x, 3);
  EXPECT_DOUBLE_EQ(g.at(0, 0), -0.5);
  EXPECT_DOUBLE_EQ(g.at(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(g.at(0, 2), 1.5);
  EXPECT_DOUBLE_EQ(g.spacing(0), 1.0);
}

TEST(RegularizationGrid, StrictlyIncreasingWithEndpoints) {
  Rng rng = make_rng(4);
  const Matrix x = sample_gaussian(Matrix::Identity(3, 3), 40, rng);
  const auto g = make_regularization_grid(x, 7);
  for (Eigen::Index k = 0; k < 3; ++k) {
    const double mean = x.row(k).mean();
    const double sd = std::sqrt((x.row(k).array() - mean).square().mean());
    EXPECT_NEAR(g.at(k, 0), x.row(k).minCoeff() - sd, 1e-12);
    EXPECT_NEAR(g.at(k, 6), x.row(k).maxCoeff() + sd, 1e-12);
    for (std::size_t l = 1; l < 7; ++l) EXPECT_GT(g.at(k, l), g.at(k, l - 1));
  }
}

TEST(Regularize, RepeatedParticlePassesThrough) {
  const auto ens = ParticleEnsemble::uniform(Matrix::Constant(1, 30, 2.5));
  Rng rng = make_rng(8);
  const auto r = regularize(ens, Matrix::Identity(1, 1), RegularizationConfig{}, rng);
  EXPECT_TRUE(r.passthrough[0]);
  for (Eigen::Index j = 0; j < 30; ++j) EXPECT_DOUBLE_EQ(r.particles(0, j), 2.5);
}

TEST(Regularize, PreservesMeanOfSymmetricCloud) {
  Rng rng = make_rng(10);
  const Matrix x = sample_gaussian(Matrix::Identity(1, 1), 10000, rng);
  const auto ens = ParticleEnsemble::uniform(x);
  const auto r = regularize(ens, Matrix::Identity(1, 1), RegularizationConfig{}, rng);
  EXPECT_NEAR(r.particles.mean(), 0.0, 0.05);
}

TEST(Regularize, GridDensityIsWeightedKernelMixture) {
  Matrix x(1, 2);
  x << 0, 1;
  ParticleEnsemble ens{x, Vector::Constant(2, 0.5)};
  RegularizationConfig cfg;
  cfg.n_reg = 3;
  cfg.bandwidth = 0.5;
  Rng rng = make_rng(1);
  const auto r = regularize(ens, Matrix::Identity(1, 1), cfg, rng);
  auto phi = [](double u) { return std::exp(-0.5 * u * u) / std::sqrt(2 * std::numbers::pi); };
  for (std::size_t l = 0; l < 3; ++l) {
    const double g = -0.5 + static_cast<double>(l);
    const double expected = (0.5 * phi(g / 0.5) + 0.5 * phi((g - 1) / 0.5)) / 0.5;
    EXPECT_NEAR(r.grid_density(0, static_cast<Eigen::Index>(l)), expected, 1e-12);
  }
}

TEST(Regularize, OutputStaysOnGridSupport) {
  Rng rng = make_rng(12);
  const Matrix x = sample_gaussian(Matrix::Identity(2, 2), 200, rng);
  const auto r = regularize(ParticleEnsemble::uniform(x), Matrix::Identity(2, 2), RegularizationConfig{}, rng);
  for (Eigen::Index k = 0; k < 2; ++k) {
    EXPECT_GE(r.particles.row(k).minCoeff(), r.grid.first(k) - 1e-12);
    EXPECT_LE(r.particles.row(k).maxCoeff(), r.grid.last(k) + 1e-12);
  }
}

TEST(RegularizationConfig, RejectsBadValues) {
  RegularizationConfig c;
  c.n_reg = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c.n_reg = 4;
  c.bandwidth = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DefaultBandwidth, MatchesRuleOfThumb) {
  EXPECT_NEAR(default_bandwidth(50, 4), std::pow(4.0 / (50.0 * 6.0), 1.0 / 8.0), 1e-15);
}

TEST(GaussianLikelihood, MatchesClosedForm) {
  Matrix c(2, 2);
  c << 2, 0.5, 0.5, 1;
  const GaussianLikelihood lik(c);
  Vector r(2);
  r << 0.3, -0.7;
  const double expected =
      -std::log(2 * std::numbers::pi) - 0.5 * std::log(c.determinant()) - 0.5 * r.dot(c.inverse() * r);
  EXPECT_NEAR(lik.log_density(r), expected, 1e-12);
}
