#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hlce/regress.hpp"
#include "support/oracles.hpp"

using namespace hlce;

namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix x(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double e : v) x(i++, 0) = e;
  return x;
}

Matrix gaussian(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) x(i, j) = z(rng);
  return x;
}

double at(const FittedModel& m, double v) { return m(std::span<const double>(&v, 1)); }

}  // namespace

TEST(LeastSquares, ExactLineOnThreePoints) {
  Vector y(3);
  y << 1.0, 3.0, 5.0;
  const auto c = solve_least_squares(column({0, 1, 2}), y, 0.0);
  EXPECT_NEAR(c.intercept, 1.0, 1e-12);
  EXPECT_NEAR(c.slopes[0], 2.0, 1e-12);
  const FittedModel m = fit_least_squares(column({0, 1, 2}), y);
  EXPECT_NEAR(at(m, 10.0), 21.0, 1e-10);
}

TEST(LeastSquares, ExactLinearDataInterpolates) {
  const Matrix x = gaussian(50, 4, 1);
  Vector beta(4);
  beta << 0.5, -2.0, 3.0, 1.25;
  const Vector y = (x * beta).array() + 0.75;
  EXPECT_LE(solve_least_squares(x, y, 0.0).rss, 1e-18 * 50);
  const FittedModel m = fit_least_squares(x, y);
  EXPECT_LE((m.predict(x) - y).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LeastSquares, DuplicatedColumnNeedsRidge) {
  Matrix x = gaussian(20, 2, 3);
  x.col(1) = x.col(0);
  const Vector y = x.col(0);
  try {
    solve_least_squares(x, y, 0.0);
    FAIL() << "accepted a rank-deficient design";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("lambda > 0"), std::string::npos);
  }
  EXPECT_NO_THROW(solve_least_squares(x, y, 1e-3));
}

TEST(LeastSquares, AgreesWithBruteForceSolve) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Index d = 1 + static_cast<Index>(seed);
    const Matrix x = gaussian(80, d, seed);
    Rng rng(seed + 100);
    std::normal_distribution<double> z(0.0, 1.0);
    Vector y(80);
    for (Index i = 0; i < 80; ++i) y[i] = x.row(i).sum() * 0.3 + z(rng);
    const auto c = solve_least_squares(x, y, 0.0);
    const auto ref = oracle::brute_lstsq(x, y);
    EXPECT_NEAR(c.intercept, static_cast<double>(ref[0]), 1e-8);
    for (Index j = 0; j < d; ++j) EXPECT_NEAR(c.slopes[j], static_cast<double>(ref[j + 1]), 1e-8);
  }
}

TEST(LeastSquares, RidgeRssIsMonotoneInLambda) {
  const Matrix x = gaussian(60, 5, 11);
  Rng rng(12);
  std::normal_distribution<double> z(0.0, 1.0);
  Vector y(60);
  for (Index i = 0; i < 60; ++i) y[i] = 2.0 * x(i, 0) - x(i, 3) + z(rng);
  double prev = -1.0;
  for (double lambda : {0.0, 1e-4, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e4}) {
    const double rss = solve_least_squares(x, y, lambda).rss;
    EXPECT_GE(rss, prev - 1e-10) << lambda;
    prev = rss;
  }
}

TEST(Polynomial, FeatureExamples) {
  const Matrix one = polynomial_features(column({3.0}), 2);
  ASSERT_EQ(one.cols(), 2);
  EXPECT_EQ(one(0, 0), 3.0);
  EXPECT_EQ(one(0, 1), 9.0);

  Matrix x2(1, 2);
  x2 << 2.0, 5.0;
  const Matrix f = polynomial_features(x2, 2);
  ASSERT_EQ(f.cols(), 5);
  // x0, x1, x0^2, x0 x1, x1^2
  EXPECT_EQ(f(0, 0), 2.0);
  EXPECT_EQ(f(0, 1), 5.0);
  EXPECT_EQ(f(0, 2), 4.0);
  EXPECT_EQ(f(0, 3), 10.0);
  EXPECT_EQ(f(0, 4), 25.0);

  const Matrix x = gaussian(4, 3, 1);
  EXPECT_TRUE(polynomial_features(x, 1) == x);
}

TEST(Polynomial, ColumnCountFormula) {
  auto choose = [](int n, int k) {
    double r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return static_cast<Index>(std::llround(r));
  };
  for (int d = 1; d <= 5; ++d) {
    for (int deg = 1; deg <= 4; ++deg) {
      const Matrix f = polynomial_features(Matrix::Ones(2, d), deg);
      EXPECT_EQ(f.cols(), choose(d + deg, deg) - 1) << d << " " << deg;
      if (d == 1) EXPECT_EQ(f.cols(), deg);
    }
  }
  EXPECT_THROW(polynomial_features(Matrix::Ones(1, 50), 6, 1000), std::invalid_argument);
  EXPECT_THROW(polynomial_features(Matrix::Ones(1, 2), 0), std::invalid_argument);
}

TEST(Logistic, SymmetricDataGivesHalf) {
  // Every covariate row appears once with each label.
  const Index n = 10000;
  const Matrix half = gaussian(n / 2, 2, 5);
  Matrix x(n, 2);
  x << half, half;
  Vector labels(n);
  for (Index i = 0; i < n; ++i) labels[i] = i < n / 2 ? 0.0 : 1.0;
  const FittedModel m = fit_logistic(x, labels);
  const Vector p = m.predict(gaussian(200, 2, 6));
  EXPECT_LT((p.array() - 0.5).abs().maxCoeff(), 0.02);
}

TEST(Logistic, RecoversGeneratingSlope) {
  const Index n = 50000;
  const Matrix x = gaussian(n, 1, 8);
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector labels(n);
  for (Index i = 0; i < n; ++i) labels[i] = u(rng) < 1.0 / (1.0 + std::exp(-1.5 * x(i, 0))) ? 1.0 : 0.0;
  const FittedModel m = fit_logistic(x, labels);
  EXPECT_NEAR(m.parameters()[1], 1.5, 0.1);
  EXPECT_NEAR(m.parameters()[0], 0.0, 0.1);
  EXPECT_TRUE(m.diagnostics().converged);
}

TEST(Logistic, SingleClassRejectedSeparationFlagged) {
  EXPECT_THROW(fit_logistic(column({1, 2, 3}), Vector::Ones(3)), std::invalid_argument);
  Vector labels(6);
  labels << 0, 0, 0, 1, 1, 1;
  const FittedModel m = fit_logistic(column({-3, -2, -1, 1, 2, 3}), labels);
  EXPECT_TRUE(m.diagnostics().separation_warning);
  EXPECT_NEAR(at(m, 5.0), 1.0 - kDefaultClip, 1e-12);
  EXPECT_NEAR(at(m, -5.0), kDefaultClip, 1e-12);
}

TEST(MisspecPropensity, IndependenceAndIdentity) {
  const Index n = 20000;
  const Matrix x = gaussian(n, 1, 21);
  Vector labels(n);
  for (Index i = 0; i < n; ++i) labels[i] = i % 2;
  const FittedModel flat = fit_misspec_propensity(x, labels);
  EXPECT_NEAR(flat.parameters()[0], 0.0, 0.05);
  EXPECT_NEAR(at(flat, 1.3), 0.5, 0.02);

  Rng rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index i = 0; i < n; ++i) labels[i] = u(rng) < 1.0 / (1.0 + std::exp(0.7 * x(i, 0) * x(i, 0))) ? 1.0 : 0.0;
  EXPECT_DOUBLE_EQ(at(fit_misspec_propensity(x, labels), 0.0), 0.5);
}

TEST(MisspecPropensity, RecoversAlpha) {
  const Index n = 50000;
  const Matrix x = gaussian(n, 1, 31);
  Rng rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector labels(n);
  for (Index i = 0; i < n; ++i) labels[i] = u(rng) < 1.0 / (1.0 + std::exp(x(i, 0) * x(i, 0))) ? 1.0 : 0.0;
  EXPECT_NEAR(fit_misspec_propensity(x, labels).parameters()[0], 1.0, 0.1);
  EXPECT_THROW(fit_misspec_propensity(gaussian(4, 2, 1), Vector::Zero(4)), std::invalid_argument);
}

TEST(Frequency, Examples) {
  Vector l(4);
  l << 1, 1, 0, 0;
  EXPECT_DOUBLE_EQ(at(fit_frequency(l, 1), 7.0), 0.5);
  EXPECT_DOUBLE_EQ(at(fit_frequency(Vector::Ones(5), 1), 0.0), 1.0 - kDefaultClip);
  // Labels are "is experimental" with a 25% share; the misspecified variant
  // reports the frequency of the complementary label.
  Vector is_e = Vector::Zero(100);
  is_e.head(25).setOnes();
  const Vector is_o = 1.0 - is_e.array();
  EXPECT_DOUBLE_EQ(at(fit_frequency(is_e, 1), 0.0), 0.25);
  EXPECT_DOUBLE_EQ(at(fit_frequency(is_o, 1), 0.0), 0.75);
}

TEST(Classifiers, OutputsAlwaysInsideClipBand) {
  const Matrix x = gaussian(300, 1, 41);
  Vector labels(300);
  for (Index i = 0; i < 300; ++i) labels[i] = x(i, 0) > 0.2 ? 1.0 : 0.0;
  const Matrix probe = gaussian(500, 1, 42) * 50.0;
  for (double eps : {0.01, 0.05, 0.2}) {
    for (auto kind : {ClassifierKind::logistic, ClassifierKind::frequency, ClassifierKind::misspec_quadratic_logit,
                      ClassifierKind::mlp}) {
      ClassifierSpec spec;
      spec.kind = kind;
      spec.clip = eps;
      spec.mlp.epochs = 5;
      const Vector p = fit_classifier(spec, x, labels).predict(probe);
      EXPECT_GE(p.minCoeff(), eps);
      EXPECT_LE(p.maxCoeff(), 1.0 - eps);
    }
  }
}

TEST(KernelRidge, InterpolatesAtTinyPenalty) {
  const Matrix x = column({-2.0, -1.1, -0.3, 0.4, 1.0, 1.7, 2.5});
  Vector y(7);
  y << 0.3, -1.0, 2.0, 0.5, 0.1, -0.4, 1.2;
  KernelSpec spec;
  spec.bandwidth = 0.5;
  const FittedModel m = fit_kernel_ridge(x, y, spec, 1e-8);
  EXPECT_LE((m.predict(x) - y).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_THROW(fit_kernel_ridge(x, y, spec, 0.0), std::invalid_argument);
}

TEST(KernelRidge, ConstantResponse) {
  const Matrix x = gaussian(40, 2, 3);
  const FittedModel m = fit_kernel_ridge(x, Vector::Constant(40, 4.5), KernelSpec{}, 0.04);
  EXPECT_LE((m.predict(gaussian(20, 2, 4)).array() - 4.5).abs().maxCoeff(), 1e-12);
}

TEST(KernelRidge, LearnsSine) {
  const Index n = 200;
  Matrix x(n, 1), held(n - 1, 1);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = -3.0 + 6.0 * i / (n - 1);
    y[i] = std::sin(x(i, 0));
  }
  for (Index i = 0; i + 1 < n; ++i) held(i, 0) = 0.5 * (x(i, 0) + x(i + 1, 0));
  const FittedModel m = fit_kernel_ridge(x, y, KernelSpec{}, 1e-3 * n * 1e-3);
  double worst = 0.0;
  for (Index i = 0; i < held.rows(); ++i) worst = std::max(worst, std::abs(at(m, held(i, 0)) - std::sin(held(i, 0))));
  EXPECT_LT(worst, 0.05);
}

TEST(KernelRidge, NystromTracksExactSolve) {
  const Index n = 1500;
  const Matrix x = gaussian(n, 1, 51);
  Rng rng(52);
  std::normal_distribution<double> z(0.0, 0.3);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = 2.0 + 2.0 * x(i, 0) + x(i, 0) * x(i, 0) + z(rng);
  KernelSpec exact;
  exact.exact_limit = n;
  const FittedModel a = fit_kernel_ridge(x, y, exact, 1e-3 * n);
  const FittedModel b = fit_kernel_ridge(x, y, KernelSpec{}, 1e-3 * n);
  const Matrix probe = column({-1.5, -0.5, 0.0, 0.7, 1.4});
  EXPECT_LT((a.predict(probe) - b.predict(probe)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Regressors, PredictionIsPure) {
  const Matrix x = gaussian(100, 2, 61);
  const Vector y = x.col(0).array().square();
  for (auto kind : {RegressorKind::ols, RegressorKind::polynomial, RegressorKind::kernel_ridge}) {
    RegressorSpec spec;
    spec.kind = kind;
    const FittedModel m = fit_regressor(spec, x, y);
    EXPECT_EQ(m.predict(x), m.predict(x));
    EXPECT_THROW(m(std::vector<double>{1.0}), std::invalid_argument);
  }
}
