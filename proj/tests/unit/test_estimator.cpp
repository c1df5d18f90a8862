#include <gtest/gtest.h>

#include "hlce/estimator.hpp"
#include "hlce/metrics.hpp"
#include "hlce/simgen.hpp"
#include "support/oracles.hpp"

using namespace hlce;

namespace {

Matrix grid(double lo, double hi, Index m) {
  Matrix x(m, 1);
  for (Index i = 0; i < m; ++i) x(i, 0) = lo + (hi - lo) * i / (m - 1);
  return x;
}

Vector tau_on(const Matrix& x) {
  Vector t(x.rows());
  for (Index i = 0; i < x.rows(); ++i) t[i] = oracle::tau1(x(i, 0));
  return t;
}

EstimatorConfig oracle_config(EstimatorKind kind, double p_e = 0.4) {
  EstimatorConfig c;
  c.kind = kind;
  c.nuisance = NuisanceSpec::uniform(Backend::oracle);
  c.nuisance.oracle = oracle_nuisances_dataset1(p_e);
  c.stage2 = polynomial_spec(2);
  return c;
}

FittedHLCE constant_model(double c) {
  return FittedHLCE([c](std::span<const double>) { return c; }, 1, Provenance{});
}

}  // namespace

TEST(FitTwoStage, NaiveWithOracleIsExactTau) {
  const PanelDataset d = sample_dataset1(50, 60, 1).dataset;
  const FittedHLCE m = fit_two_stage(d, oracle_config(EstimatorKind::naive));
  const Matrix g = grid(-3, 3, 61);
  EXPECT_LE((m.predict(g) - tau_on(g)).cwiseAbs().maxCoeff(), 1e-12);
}

// Evaluation units are a fresh draw from the same population. Single fits
// scatter widely (roughly 0.02 to 0.3), so the threshold is on the median.
TEST(FitTwoStage, MrWithOracleNuisancesOnHeldOutUnits) {
  const Matrix held = sample_dataset1(2000, 3000, 3).dataset.x();
  std::vector<double> errs;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FittedHLCE m = fit_two_stage(sample_dataset1(10000, 15000, 20 + seed).dataset,
                                       oracle_config(EstimatorKind::mr));
    errs.push_back(pehe(m.predict(held), tau_on(held)));
    EXPECT_EQ(m.provenance().n_e, 10000);
    EXPECT_EQ(m.provenance().stage2_rows, 25000);
  }
  EXPECT_LT(median(errs), 0.15);
}

TEST(FitTwoStage, DeterministicPerSeed) {
  const PanelDataset d = sample_dataset2(300, 500, 3).dataset;
  for (SplitMode split : {SplitMode::full, SplitMode::two_fold, SplitMode::cross_fit}) {
    EstimatorConfig c;
    c.kind = EstimatorKind::mr;
    c.nuisance = NuisanceSpec::uniform(Backend::kernel);
    c.split = split;
    c.folds = 3;
    c.seed = 17;
    const Matrix g = grid(-2, 2, 25);
    EXPECT_EQ(fit_two_stage(d, c).predict(g), fit_two_stage(d, c).predict(g)) << split_name(split);
  }
}

TEST(FitTwoStage, TwoFoldUsesHalfForStageTwo) {
  const PanelDataset d = sample_dataset1(400, 600, 4).dataset;
  EstimatorConfig c = oracle_config(EstimatorKind::reg);
  c.split = SplitMode::two_fold;
  c.seed = 5;
  const FittedHLCE m = fit_two_stage(d, c);
  EXPECT_NEAR(static_cast<double>(m.provenance().stage2_rows), 500.0, 2.0);
  c.kind = EstimatorKind::naive;
  EXPECT_EQ(fit_two_stage(d, c).provenance().stage2_rows, 0);
}

TEST(FitTwoStage, CrossFitEqualsFullDataWithOracleNuisances) {
  const PanelDataset d = sample_dataset1(300, 450, 6).dataset;
  for (auto kind : {EstimatorKind::reg, EstimatorKind::pro, EstimatorKind::mr}) {
    EstimatorConfig c = oracle_config(kind);
    c.nuisance.pinned_p_o = 0.6;
    c.split = SplitMode::full;
    const Vector full = pseudo_outcomes(d, c);
    c.split = SplitMode::cross_fit;
    c.folds = 4;
    c.seed = 9;
    EXPECT_EQ(pseudo_outcomes(d, c), full);
    const Matrix g = grid(-2, 2, 11);
    const Vector a = fit_two_stage(d, c).predict(g);
    c.split = SplitMode::full;
    EXPECT_EQ(a, fit_two_stage(d, c).predict(g)) << estimator_name(kind);
  }
}

TEST(Predict, EmptyDuplicateAndRowwise) {
  const PanelDataset d = sample_dataset1(500, 700, 7).dataset;
  EstimatorConfig c = oracle_config(EstimatorKind::reg);
  const FittedHLCE m = fit_two_stage(d, c);
  EXPECT_EQ(m.predict(Matrix(0, 1)).size(), 0);
  Matrix x(3, 1);
  x << 0.4, 0.4, -1.0;
  const Vector p = m.predict(x);
  EXPECT_EQ(p[0], p[1]);
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(p[i], m(row_span(x, i)));
  EXPECT_THROW(m.predict(Matrix::Zero(2, 2)), std::invalid_argument);
}

TEST(Ate, Examples) {
  EXPECT_DOUBLE_EQ(constant_model(1.75).ate(grid(-1, 1, 9)), 1.75);
  const FittedHLCE ident([](std::span<const double> x) { return x[0]; }, 1, Provenance{});
  Matrix two(2, 1);
  two << 1.0, 3.0;
  EXPECT_DOUBLE_EQ(ident.ate(two), 2.0);
  EXPECT_THROW(ident.ate(Matrix(0, 1)), std::invalid_argument);
}

TEST(Ate, OracleNaiveOverMarginal) {
  // X is an equal mixture of N(-1/2, 1) and N(1/2, 1): E[2 + 2X + X^2] = 3.25.
  const PanelDataset big = sample_dataset1(100000, 100000, 8).dataset;
  const FittedHLCE m = fit_two_stage(sample_dataset1(20, 20, 1).dataset, oracle_config(EstimatorKind::naive));
  const Vector t = m.predict(big.x());
  const double se = std::sqrt((t.array() - t.mean()).square().sum() / (t.size() - 1) / t.size());
  EXPECT_NEAR(m.ate(big.x()), 3.25, 3.0 * se);
}

// Correctly specified nuisances: median PEHE shrinks with n for the estimators
// that are consistent under them.
TEST(Properties, ConsistencyLadder) {
  const std::vector<Index> sizes = {2000, 8000, 32000};
  const GenOutput eval = sample_dataset1(2000, 3000, 999);
  for (auto kind : {EstimatorKind::naive, EstimatorKind::reg, EstimatorKind::pro}) {
    std::vector<double> medians;
    for (Index n : sizes) {
      std::vector<double> errs;
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Index ne = n * 2 / 5;
        EstimatorConfig c;
        c.kind = kind;
        c.nuisance = NuisanceSpec::uniform(Backend::correct_parametric);
        c.stage2 = polynomial_spec(2);
        const FittedHLCE m = fit_two_stage(sample_dataset1(ne, n - ne, 100 + seed).dataset, c);
        errs.push_back(pehe(m.predict(eval.dataset.x()), eval.truth.tau));
      }
      medians.push_back(median(errs));
    }
    EXPECT_GT(medians[0], medians[1]) << estimator_name(kind);
    EXPECT_GT(medians[1], medians[2]) << estimator_name(kind);
  }
}

TEST(Properties, MultipleRobustnessRatio) {
  const std::vector<std::vector<int>> one_set = {{1}, {2}, {3}, {4}};
  const Matrix held = sample_dataset1(2000, 3000, 499).dataset.x();
  auto median_pehe = [&held](const std::vector<int>& sets) {
    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const GenOutput gen = sample_dataset1(10000, 15000, 500 + seed);
      const NuisanceSet ns = fit_nuisances(gen.dataset, misspecification_preset(sets));
      const FittedHLCE m = fit_with_nuisances(gen.dataset, EstimatorKind::mr, ns, polynomial_spec(2));
      errs.push_back(pehe(m.predict(held), tau_on(held)));
    }
    return median(errs);
  };
  const double worst = median_pehe({});
  for (const auto& s : one_set) {
    EXPECT_LT(median_pehe(s), worst / 3.0) << "set " << s[0];
  }
}

TEST(Properties, NaiveAndRegSimilarOnDataset2) {
  std::vector<double> naive, reg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GenOutput gen = sample_dataset2(1000, 2000, 700 + seed);
    const auto idx = split_indices(gen.dataset, {0.63, 0.27, 0.10}, seed);
    const PanelDataset train = gen.dataset.subset(idx.train);
    const Matrix tx = gen.dataset.subset(idx.test).x();
    const Vector tt = gen.truth.subset(idx.test).tau;
    const NuisanceSet ns = fit_nuisances(train, NuisanceSpec::uniform(Backend::kernel));
    naive.push_back(pehe(fit_with_nuisances(train, EstimatorKind::naive, ns, {}).predict(tx), tt));
    reg.push_back(pehe(fit_with_nuisances(train, EstimatorKind::reg, ns, {}).predict(tx), tt));
  }
  const double a = median(naive), b = median(reg);
  EXPECT_LT(std::abs(a - b) / std::max(a, b), 0.25) << a << " vs " << b;
}

TEST(Estimators, NamesRoundTrip) {
  for (auto k : kAllEstimators) EXPECT_EQ(parse_estimator(estimator_name(k)), k);
  EXPECT_THROW(parse_estimator("dr"), std::invalid_argument);
  EXPECT_THROW(pseudo_kind(EstimatorKind::naive), std::invalid_argument);
}
