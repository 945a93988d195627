#include <gtest/gtest.h>

#include "dpf/param_filter.hpp"

using namespace dpf;

namespace {

// y = theta^p x with a wide parameter domain.
ModelSpec power_model(int p, double lo = -10.0, double hi = 10.0) {
  ModelSpec m;
  m.name = "power";
  m.n_x = m.n_theta = m.n_y = 1;
  m.transition = [](std::size_t, const Vector& x, const Vector&, const Vector& w) { return Vector(x + w); };
  m.output = [p](const Vector& x, const Vector& th) { return Vector::Constant(1, std::pow(th(0), p) * x(0)); };
  m.process_noise_cov = Matrix::Constant(1, 1, 1e-2);
  m.measurement_noise_cov = Matrix::Constant(1, 1, 1e-2);
  m.param_domain = {Vector::Constant(1, lo), Vector::Constant(1, hi)};
  return m;
}

// Output independent of theta, so the reweighting step is uninformative.
ModelSpec blind_model(Eigen::Index n_theta) {
  ModelSpec m;
  m.name = "blind";
  m.n_x = m.n_y = 1;
  m.n_theta = n_theta;
  m.transition = [](std::size_t, const Vector& x, const Vector&, const Vector& w) { return Vector(x + w); };
  m.output = [](const Vector& x, const Vector&) { return x; };
  m.process_noise_cov = Matrix::Constant(1, 1, 1.0);
  m.measurement_noise_cov = Matrix::Constant(1, 1, 1.0);
  m.param_domain = {Vector::Constant(n_theta, -1e6), Vector::Constant(n_theta, 1e6)};
  return m;
}

StateContext at(double x) { return StateContext{Vector::Constant(1, x), Vector::Constant(1, x), 0, {}}; }

ParamFilterConfig config(double var, std::size_t n, double a = 0.93) {
  ParamFilterConfig c;
  c.particles = n;
  c.shrinkage = a;
  c.evolution_cov = Matrix::Constant(1, 1, var);
  return c;
}

}  // namespace

TEST(PredictionError, LinearExample) {
  EXPECT_DOUBLE_EQ(prediction_error(Vector::Ones(1), at(1.0), Vector::Constant(1, 2.0), power_model(1))(0), 1.0);
}

TEST(PredictionError, PerfectPredictionIsZero) {
  const auto m = power_model(2);
  const Vector th = Vector::Constant(1, 1.3);
  const Vector y = m.observe(Vector::Constant(1, 0.7), th);
  EXPECT_DOUBLE_EQ(prediction_error(th, at(0.7), y, m)(0), 0.0);
}

TEST(PredictionError, QuadraticExample) {
  EXPECT_DOUBLE_EQ(prediction_error(Vector::Constant(1, 1.5), at(2.0), Vector::Constant(1, 5.0), power_model(2))(0),
                   0.5);
}

TEST(PredictionError, OneStepPredictorPropagatesPreviousState) {
  auto m = power_model(1);
  m.transition = [](std::size_t, const Vector& x, const Vector& th, const Vector& w) { return Vector(th(0) * x + w); };
  StateContext ctx{Vector::Constant(1, 100.0), Vector::Constant(1, 2.0), 0, {}};
  // h(f(2, 0.5), 0.5) = 0.5 * (0.5 * 2)
  EXPECT_DOUBLE_EQ(predicted_output(Vector::Constant(1, 0.5), ctx, m, OutputPredictor::one_step)(0), 0.5);
}

TEST(UpdatingGain, Examples) {
  Vector a(2), c(4), b(3);
  a << 1, -1;
  c << 0.3, 0.3, 0.3, 0.3;
  b << 3, 0, 0;
  EXPECT_NEAR(updating_gain(a), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(updating_gain(c), 0.0, 1e-15);
  EXPECT_NEAR(updating_gain(b), std::sqrt(6.0), 1e-15);
}

TEST(OutputJacobian, LinearInTheta) {
  ParamFilterConfig c = config(1e-4, 1);
  EXPECT_NEAR(output_jacobian(Vector::Ones(1), at(3.0), power_model(1), c)(0, 0), 3.0, 1e-9);
}

TEST(OutputJacobian, FiniteDifferenceMatchesAnalytic) {
  auto m = power_model(2);
  m.output_jacobian = [](const Vector& x, const Vector& th) { return Matrix::Constant(1, 1, 2 * th(0) * x(0)); };
  ParamFilterConfig c = config(1e-4, 1);
  const Vector th = Vector::Constant(1, 2.0);
  const double fd = output_jacobian(th, at(1.0), m, c)(0, 0);
  c.jacobian = JacobianMode::analytic;
  const double an = output_jacobian(th, at(1.0), m, c)(0, 0);
  EXPECT_DOUBLE_EQ(an, 4.0);
  EXPECT_NEAR(fd, an, 1e-6);
}

TEST(OutputJacobian, OneSidedAtDomainEdge) {
  const auto m = power_model(2, 0.0, 2.0);
  ParamFilterConfig c = config(1e-4, 1);
  EXPECT_NEAR(output_jacobian(Vector::Constant(1, 2.0), at(1.0), m, c)(0, 0), 4.0, 1e-4);
  EXPECT_NEAR(output_jacobian(Vector::Constant(1, 0.0), at(1.0), m, c)(0, 0), 0.0, 1e-4);
}

TEST(OutputJacobian, ShapeIsThetaByOutput) {
  ModelSpec m = blind_model(3);
  m.n_y = 2;
  m.output = [](const Vector& x, const Vector& th) {
    Vector y(2);
    y << th(0) * x(0) + th(2), th(1) * th(1);
    return y;
  };
  const Matrix psi = output_jacobian(Vector::Ones(3), at(2.0), m, config(1e-4, 1));
  ASSERT_EQ(psi.rows(), 3);
  ASSERT_EQ(psi.cols(), 2);
  Matrix expected(3, 2);
  expected << 2, 0, 0, 2, 1, 0;
  EXPECT_LT((psi - expected).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ProjectStep, InsideIsUnchanged) {
  ParamDomain d{Vector::Zero(1), Vector::Ones(1)};
  const auto r = project_step(Vector::Constant(1, 0.5), Vector::Constant(1, 0.2), d, 0.5);
  EXPECT_DOUBLE_EQ(r.point(0), 0.7);
  EXPECT_EQ(r.scalings, 0u);
}

TEST(ProjectStep, TwoIterationTrace) {
  ParamDomain d{Vector::Zero(1), Vector::Ones(1)};
  const auto r = project_step(Vector::Constant(1, 0.5), Vector::Constant(1, 0.9), d, 0.5);
  EXPECT_DOUBLE_EQ(r.point(0), 0.95);
  EXPECT_EQ(r.scalings, 1u);
  EXPECT_FALSE(r.flagged);
}

TEST(ProjectStep, ZeroStepReturnsStart) {
  ParamDomain d{Vector::Zero(1), Vector::Ones(1)};
  EXPECT_DOUBLE_EQ(project_step(Vector::Constant(1, 0.3), Vector::Zero(1), d, 0.5).point(0), 0.3);
}

TEST(ProjectStep, UnitFactorTerminatesWithFlag) {
  ParamDomain d{Vector::Zero(1), Vector::Ones(1)};
  const auto r = project_step(Vector::Constant(1, 0.5), Vector::Constant(1, 3.0), d, 1.0);
  EXPECT_TRUE(r.flagged);
  EXPECT_EQ(r.scalings, 64u);
  EXPECT_DOUBLE_EQ(r.point(0), 0.5);
}

TEST(ShrinkageBound, DistinctEigenvalues) {
  // psi = I and V_theta = I make M = V_y.
  Matrix p = Matrix::Identity(2, 2);
  Matrix vy(2, 2);
  vy << 1, 0, 0, 4;
  const auto b = shrinkage_upper_bound(1.0, p, vy, Matrix::Identity(2, 2));
  EXPECT_NEAR(b.sigma_min, 1.0, 1e-12);
  EXPECT_NEAR(b.sigma_max, 4.0, 1e-12);
  EXPECT_NEAR(b.a_max, 0.5, 1e-12);
  EXPECT_FALSE(b.degenerate);
}

TEST(ShrinkageBound, ScaledIdentityGivesZero) {
  const auto b = shrinkage_upper_bound(2.0, Matrix::Identity(3, 3), Matrix::Identity(3, 3) * 0.7, Matrix::Identity(3, 3));
  EXPECT_NEAR(b.a_max, 0.0, 1e-12);
  EXPECT_TRUE(b.degenerate);
}

TEST(ShrinkageBound, ScalarIsDegenerateWithWarning) {
  const auto b = shrinkage_upper_bound(1.0, Matrix::Constant(1, 1, 3.0), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
  EXPECT_DOUBLE_EQ(b.a_max, 0.0);
  EXPECT_TRUE(b.degenerate);
  EXPECT_FALSE(b.warning.empty());
}

TEST(ShrinkageBound, ZeroSensitivityThrows) {
  EXPECT_THROW(shrinkage_upper_bound(1.0, Matrix::Zero(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
               DomainError);
}

TEST(Evolve, ZeroErrorFullShrinkageNoNoiseIsFixedPoint) {
  // a = 1 removes the kernel noise term entirely.
  const auto m = power_model(1);
  Matrix p(1, 3);
  p << 0.9, 1.0, 1.1;
  ParamFilter f(p, config(1e-4, 3, 1.0), m.param_domain);
  Rng rng = make_rng(1);
  const Vector y = m.observe(Vector::Ones(1), Vector::Ones(1));
  const auto r = f.evolve(at(1.0), y, m, rng);
  // Scalar output: R = 0 so the gradient term vanishes for every particle.
  EXPECT_TRUE(r.intermediate.isApprox(p, 0.0));
}

TEST(Evolve, ShrinkageArithmetic) {
  ParamFilterConfig c = config(1e-300, 2, 0.5);
  c.kernel_cov = KernelCovSource::initial;
  c.cov_floor = 0.0;
  const auto m = power_model(1);
  Matrix p(1, 2);
  p << 2.0, 0.0;
  ParamFilter f(p, c, m.param_domain);
  Rng rng = make_rng(1);
  const auto r = f.evolve(at(1.0), Vector::Ones(1), m, rng);
  EXPECT_NEAR(r.intermediate(0, 0), 1.5, 1e-12);
  EXPECT_NEAR(r.intermediate(0, 1), 0.5, 1e-12);
}

TEST(Evolve, ShrinkagePreservesEnsembleMean) {
  ParamFilterConfig c = config(1e-300, 200, 0.93);
  c.kernel_cov = KernelCovSource::initial;
  c.cov_floor = 0.0;
  const auto m = blind_model(2);
  c.evolution_cov = Matrix::Identity(2, 2) * 1e-300;
  Rng rng = make_rng(5);
  Matrix p = sample_gaussian(Matrix::Identity(2, 2), 200, rng);
  ParamFilter f(p, c, m.param_domain);
  const auto r = f.evolve(at(0.0), Vector::Zero(1), m, rng);
  EXPECT_LT((column_mean(r.intermediate) - column_mean(p)).cwiseAbs().maxCoeff(), 1e-12);
}

// With no gradient and the running kernel covariance, the variance of the
// evolved ensemble equals the variance it started from.
TEST(Evolve, NonDispersionUnderZeroError) {
  const std::size_t n = 10000;
  const auto m = blind_model(1);
  ParamFilterConfig c = config(0.04, n, 0.93);
  Rng rng = make_rng(21);
  auto f = ParamFilter::from_gaussian(Vector::Ones(1), Matrix::Constant(1, 1, 0.04), c, m.param_domain, rng);
  const double v0 = sample_covariance(f.ensemble().particles)(0, 0);
  for (int t = 0; t < 100; ++t) f.step(at(0.0), Vector::Zero(1), m, rng);
  const double v1 = sample_covariance(f.ensemble().particles)(0, 0);
  EXPECT_LT(std::abs(v1 - v0) / v0, 0.1);
}

TEST(Evolve, ParticlesStayInsideDomain) {
  auto m = power_model(1, 0.0, 1.0);
  ParamFilterConfig c = config(0.5, 300, 0.5);
  Rng rng = make_rng(8);
  auto f = ParamFilter::from_gaussian(Vector::Constant(1, 0.5), Matrix::Constant(1, 1, 0.5), c, m.param_domain, rng);
  for (int t = 0; t < 30; ++t) {
    const auto r = f.evolve(at(1.0), Vector::Constant(1, 5.0), m, rng);
    for (Eigen::Index j = 0; j < r.intermediate.cols(); ++j) ASSERT_TRUE(m.param_domain.contains(r.intermediate.col(j)));
    f.update(r.intermediate, at(1.0), Vector::Constant(1, 5.0), m, rng);
  }
  EXPECT_EQ(f.domain_violations(), 0u);
  EXPECT_EQ(f.particle_checks(), 300u * 30u);
}

TEST(Update, IdenticalParticlesGiveThatValue) {
  const auto m = power_model(1);
  ParamFilter f(Matrix::Constant(1, 5, 0.7), config(1e-4, 5), m.param_domain);
  Rng rng = make_rng(2);
  const auto r = f.update(Matrix::Constant(1, 5, 0.7), at(1.0), Vector::Ones(1), m, rng);
  EXPECT_DOUBLE_EQ(r.estimate(0), 0.7);
  EXPECT_NEAR(f.covariance()(0, 0), 0.0, 1e-30);
}

TEST(Update, ZeroLikelihoodParticleIsDropped) {
  auto m = power_model(1);
  m.measurement_noise_cov = Matrix::Constant(1, 1, 1e-6);
  Matrix p(1, 2);
  p << 1.0, 5.0;
  ParamFilter f(p, config(1e-4, 2), m.param_domain);
  Rng rng = make_rng(2);
  const auto r = f.update(p, at(1.0), Vector::Ones(1), m, rng);
  EXPECT_DOUBLE_EQ(r.estimate(0), 1.0);
}

TEST(ParamFilter, FromGaussianRejectsMeanOutsideDomain) {
  const auto m = power_model(1, 0.0, 1.0);
  Rng rng = make_rng(1);
  EXPECT_THROW(ParamFilter::from_gaussian(Vector::Constant(1, 2.0), Matrix::Constant(1, 1, 1e-4), config(1e-4, 4),
                                          m.param_domain, rng),
               DomainError);
}

TEST(ParamFilter, ConfigValidation) {
  auto c = config(1e-4, 4);
  c.shrinkage = 1.5;
  EXPECT_THROW(c.validate(1), ConfigError);
  c = config(0.0, 4);
  EXPECT_THROW(c.validate(1), CovarianceError);
  c = config(1e-4, 4);
  c.projection_factor = 2.0;
  EXPECT_THROW(c.validate(1), ConfigError);
}

TEST(StepSchedule, ConstantAndDecaying) {
  StepSchedule s;
  EXPECT_DOUBLE_EQ(s.at(0), 0.9);
  EXPECT_DOUBLE_EQ(s.at(1000), 0.9);
  StepSchedule d{1.0, 0.1, 1.0};
  EXPECT_DOUBLE_EQ(d.at(0), 1.0);
  EXPECT_NEAR(d.at(1), 0.55, 1e-15);
  EXPECT_LT(d.at(100000), 0.1001);
}

TEST(ParamFilter, PmaxBoundIsComputedOnce) {
  const auto m = power_model(1);
  auto c = config(1e-4, 10);
  c.pmax = PmaxConfig{0.9, Matrix::Ones(1, 1)};
  Rng rng = make_rng(3);
  auto f = ParamFilter::from_gaussian(Vector::Ones(1), Matrix::Constant(1, 1, 1e-4), c, m.param_domain, rng);
  f.step(at(1.0), Vector::Ones(1), m, rng);
  ASSERT_TRUE(f.shrinkage_bound().has_value());
  EXPECT_TRUE(f.shrinkage_bound()->degenerate);
  EXPECT_DOUBLE_EQ(f.shrinkage_bound()->a_max, 0.0);
}
