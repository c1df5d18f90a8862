#include <gtest/gtest.h>

#include <random>

#include "hlce/pseudo.hpp"
#include "hlce/simgen.hpp"
#include "support/oracles.hpp"

using namespace hlce;

namespace {

Observation obs(Group g, int a, double s, std::optional<double> y = std::nullopt) { return {g, a, s, y}; }

NuisanceValues random_values(Rng& rng) {
  std::normal_distribution<double> z(0.0, 2.0);
  std::uniform_real_distribution<double> p(0.02, 0.98);
  NuisanceValues v;
  for (int a = 0; a < 2; ++a) {
    v.mu_s_e[a] = z(rng);
    v.mu_s_o[a] = z(rng);
    v.mu_y_o[a] = z(rng);
  }
  v.pi_e = p(rng);
  v.pi_o = p(rng);
  v.pi_g = p(rng);
  return v;
}

}  // namespace

TEST(Naive, Examples) {
  NuisanceValues v;
  v.mu_y_o = {1.0, 4.0};
  v.mu_s_e = {2.0, 3.0};
  v.mu_s_o = {1.0, 2.0};
  EXPECT_DOUBLE_EQ(tau_naive(v), 3.0);
  NuisanceValues flat;
  flat.mu_y_o = {1.5, 1.5};
  flat.mu_s_e = {-2.0, -2.0};
  flat.mu_s_o = {7.0, 7.0};
  EXPECT_DOUBLE_EQ(tau_naive(flat), 0.0);
  const double zero = 0.0;
  EXPECT_DOUBLE_EQ(tau_naive(std::span<const double>(&zero, 1), oracle_nuisances_dataset1()), 2.0);
}

TEST(Reg, Examples) {
  NuisanceValues v;
  v.mu_y_o = {1.0, 4.0};
  v.mu_s_o = {1.0, 2.0};
  v.mu_s_e = {2.0, 3.0};
  EXPECT_DOUBLE_EQ(pseudo_reg(obs(Group::observational, 1, 2.0, 5.0), v), 4.0);
  EXPECT_DOUBLE_EQ(pseudo_reg(obs(Group::experimental, 0, 2.0), v), 3.0);
  EXPECT_THROW(pseudo_reg(obs(Group::observational, 1, 2.0), v), DataError);
}

TEST(Pro, Examples) {
  NuisanceValues v;
  v.pi_o = 0.5;
  v.pi_e = 0.5;
  v.pi_g = 0.5;
  EXPECT_DOUBLE_EQ(pseudo_pro(obs(Group::observational, 1, 1.0, 3.0), v, 0.5), 8.0);
  EXPECT_DOUBLE_EQ(pseudo_pro(obs(Group::experimental, 0, 2.0), v, 0.5), -8.0);
}

TEST(Mr, Examples) {
  NuisanceValues v;
  v.mu_y_o = {1.0, 4.0};
  v.mu_s_e = {2.0, 3.0};
  v.mu_s_o = {1.0, 2.0};
  ASSERT_DOUBLE_EQ(v.contrast(), 3.0);
  v.pi_e = 0.25;
  v.pi_g = 0.2;
  EXPECT_NEAR(pseudo_mr(obs(Group::experimental, 1, 3.1), v, 0.8), 5.0, 1e-12);
  // Residuals zero on both groups.
  EXPECT_DOUBLE_EQ(pseudo_mr(obs(Group::experimental, 0, 2.0), v, 0.8), 3.0);
  EXPECT_DOUBLE_EQ(pseudo_mr(obs(Group::observational, 1, 2.0, 4.0), v, 0.8), 3.0);
}

TEST(WeightIdentity, SignedInverseOnGrid) {
  for (int k = 0; k <= 98; ++k) {
    const double pi = 0.01 + 0.01 * k;
    // (-1)^(1-a) / (1 - a + (-1)^(1-a) pi)
    for (int a : {0, 1}) {
      const double sgn = a == 1 ? 1.0 : -1.0;
      EXPECT_NEAR(signed_inverse_propensity(a, pi), sgn / (1 - a + sgn * pi), 1e-12);
    }
    EXPECT_DOUBLE_EQ(signed_inverse_propensity(1, pi), 1.0 / pi);
    EXPECT_DOUBLE_EQ(signed_inverse_propensity(0, pi), -1.0 / (1.0 - pi));
  }
}

TEST(Mr, ResidualCancellationProperty) {
  Rng rng(1);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  for (int rep = 0; rep < 500; ++rep) {
    const NuisanceValues v = random_values(rng);
    const double p_o = p(rng);
    const int a = rep % 2;
    const double se = v.mu_s_e[a];
    const double so = v.mu_s_o[a];
    // y - mu_y - s + mu_s = 0 whenever y and s sit on their means.
    const double yo = v.mu_y_o[a];
    EXPECT_NEAR(pseudo_mr(obs(Group::experimental, a, se), v, p_o), tau_naive(v), 1e-12);
    EXPECT_NEAR(pseudo_mr(obs(Group::observational, a, so, yo), v, p_o), tau_naive(v), 1e-12);
  }
}

TEST(Mr, GroupExclusivityProperty) {
  Rng rng(2);
  std::normal_distribution<double> z(0.0, 3.0);
  for (int rep = 0; rep < 500; ++rep) {
    const NuisanceValues v = random_values(rng);
    const int a = rep % 2;
    const MrTerms te = mr_terms(obs(Group::experimental, a, z(rng)), v, 0.6);
    EXPECT_EQ(te.observational, 0.0);
    const MrTerms to = mr_terms(obs(Group::observational, a, z(rng), z(rng)), v, 0.6);
    EXPECT_EQ(to.experimental, 0.0);
    EXPECT_EQ(te.plug_in, tau_naive(v));
  }
}

TEST(Pro, BranchesNeverBothFire) {
  // The experimental branch ignores y and the observational one ignores pi^E / pi^G.
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    NuisanceValues v = random_values(rng);
    const int a = rep % 2;
    const double base = pseudo_pro(obs(Group::observational, a, 1.3, 0.4), v, 0.5);
    v.pi_e = 0.5;
    v.pi_g = 0.9;
    EXPECT_EQ(pseudo_pro(obs(Group::observational, a, 1.3, 0.4), v, 0.5), base);
    const double reg_e = pseudo_reg(obs(Group::experimental, a, 0.2), v);
    v.mu_s_o[a] += 1.0;  // the experimental reg branch uses mu_S^O only through the contrast
    EXPECT_NEAR(pseudo_reg(obs(Group::experimental, a, 0.2), v), reg_e + (a == 0 ? 1.0 : -1.0), 1e-12);
  }
}

// Monte Carlo mean of each pseudo outcome for x near 0 is tau(0) = 2.
TEST(PseudoOutcomes, CentralBinUnbiasedWithOracle) {
  const GenOutput gen = sample_dataset1(80000, 120000, 13);
  const PanelDataset& d = gen.dataset;
  const NuisanceSet ns = oracle_nuisances_dataset1(0.4).with_p_o(0.6);
  for (auto k : {PseudoKind::reg, PseudoKind::pro, PseudoKind::mr}) {
    const Vector po = pseudo_outcomes(k, d, ns);
    std::vector<double> xs, vs;
    for (Index i = 0; i < d.size(); ++i) {
      xs.push_back(d.x()(i, 0));
      vs.push_back(po[i]);
    }
    const auto bins = oracle::bin_means(xs, vs, -0.1, 0.1, 1);
    EXPECT_LT(std::abs(bins[0].mean - 2.0), 3.0 * bins[0].se) << pseudo_name(k) << " mean " << bins[0].mean;
  }
}

TEST(PseudoOutcomes, RowSelection) {
  const PanelDataset d = sample_dataset1(20, 30, 4).dataset;
  const NuisanceSet ns = oracle_nuisances_dataset1();
  const Vector all = pseudo_outcomes(PseudoKind::mr, d, ns);
  const std::vector<Index> rows = {3, 25, 3};
  const Vector some = pseudo_outcomes(PseudoKind::mr, d, ns, rows);
  ASSERT_EQ(some.size(), 3);
  EXPECT_EQ(some[0], all[3]);
  EXPECT_EQ(some[1], all[25]);
  EXPECT_EQ(some[2], all[3]);
}
