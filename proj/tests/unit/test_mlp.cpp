#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "hlce/mlp.hpp"
#include "hlce/nuisance.hpp"
#include "hlce/simgen.hpp"

using namespace hlce;

namespace {

MLPConfig small_config(Activation act = Activation::relu) {
  MLPConfig c;
  c.hidden = {5};
  c.activation = act;
  c.weight_decay = 1e-2;
  c.seed = 3;
  return c;
}

HeadBatch random_batch(Index k, int d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::bernoulli_distribution coin(0.6);
  HeadBatch b;
  b.x = BatchMatrix(k, d);
  b.targets = BatchMatrix(k, kNetHeads);
  b.masks = BatchMatrix(k, kNetHeads);
  for (Index i = 0; i < k; ++i) {
    for (int j = 0; j < d; ++j) b.x(i, j) = z(rng);
    for (int h = 0; h < kNetHeads; ++h) {
      b.targets(i, h) = is_probability_head(h) ? (coin(rng) ? 1.0 : 0.0) : z(rng);
      b.masks(i, h) = coin(rng) ? 1.0 : 0.0;
    }
  }
  return b;
}

// Biases start at zero, so a row whose previous layer is all zero puts a
// ReLU exactly on its kink. Move them to a generic point before checking.
template <class Net>
void jitter_biases(Net& net, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 0.1);
  for (auto& p : net.params()) {
    if (!p.decay) std::generate(p.value, p.value + p.size, [&] { return z(rng); });
  }
}

// Worst relative error of analytic vs central-difference gradients.
template <class Net, class LossFn>
double gradient_check(Net& net, LossFn loss_at) {
  auto ps = net.params();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : ps) analytic.emplace_back(p.grad, p.grad + p.size);
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t b = 0; b < ps.size(); ++b) {
    for (Index j = 0; j < ps[b].size; ++j) {
      double& v = ps[b].value[j];
      const double keep = v;
      v = keep + h;
      const double up = loss_at();
      v = keep - h;
      const double down = loss_at();
      v = keep;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[b][static_cast<std::size_t>(j)];
      worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6));
    }
  }
  return worst;
}

}  // namespace

TEST(SharedNet, GradientCheckAllHeads) {
  for (auto act : {Activation::relu, Activation::identity}) {
    SharedNuisanceNet net(3, small_config(act));
    jitter_biases(net, 8);
    const HeadBatch batch = random_batch(12, 3, 7);
    HeadWeights w = unit_head_weights();
    w[2] = 0.5;
    w[8] = 2.0;
    net.compute_gradients(batch, w, nullptr);
    EXPECT_LT(gradient_check(net, [&] { return net.loss(batch, w); }), 1e-4);
  }
}

TEST(SingleNet, GradientCheckBothLosses) {
  MLPConfig c = small_config();
  c.hidden = {4, 3};
  SingleOutputNet net(2, c);
  jitter_biases(net, 6);
  Rng rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  BatchMatrix x(10, 2);
  Vector y(10), labels(10);
  for (Index i = 0; i < 10; ++i) {
    x(i, 0) = z(rng);
    x(i, 1) = z(rng);
    y[i] = z(rng);
    labels[i] = i % 3 == 0;
  }
  for (bool binary : {false, true}) {
    const Vector& t = binary ? labels : y;
    net.compute_gradients(x, t, binary, nullptr);
    EXPECT_LT(gradient_check(net, [&] { return net.loss(x, t, binary); }), 1e-4);
  }
}

TEST(SharedNet, ZeroWeightsGiveBiasesAndHalf) {
  MLPConfig c = small_config(Activation::identity);
  SharedNuisanceNet net(2, c);
  for (auto& p : net.params()) std::fill(p.value, p.value + p.size, p.decay ? 0.0 : 0.3);
  BatchMatrix x(1, 2);
  x << 1.7, -0.4;
  const BatchMatrix out = net.forward(x, 0.0);
  for (int h = 0; h < kNetHeads; ++h) {
    EXPECT_DOUBLE_EQ(out(0, h), is_probability_head(h) ? sigmoid(0.3) : 0.3) << h;
  }
  for (auto& p : net.params()) std::fill(p.value, p.value + p.size, 0.0);
  const BatchMatrix half = net.forward(x, 0.01);
  for (int h = 6; h < kNetHeads; ++h) EXPECT_DOUBLE_EQ(half(0, h), 0.5);
}

TEST(SharedNet, BatchingAndDimensionChecks) {
  SharedNuisanceNet net(3, small_config());
  const HeadBatch b = random_batch(7, 3, 1);
  const BatchMatrix all = net.forward(b.x, 0.01);
  for (Index i = 0; i < 7; ++i) {
    const BatchMatrix one = net.forward(b.x.row(i), 0.01);
    EXPECT_LE((one.row(0) - all.row(i)).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_THROW(net.forward(BatchMatrix::Zero(1, 2), 0.01), std::invalid_argument);
  MLPConfig empty = small_config();
  empty.hidden = {};
  EXPECT_THROW(SharedNuisanceNet(3, empty), std::invalid_argument);
}

TEST(SharedNet, MaskedEntriesContributeNoGradient) {
  SharedNuisanceNet net(3, small_config());
  HeadBatch b = random_batch(16, 3, 9);
  const auto w = unit_head_weights();
  net.compute_gradients(b, w, nullptr);
  std::vector<std::vector<double>> before;
  for (const auto& p : net.params()) before.emplace_back(p.grad, p.grad + p.size);
  const double loss_before = net.loss(b, w);
  for (Index i = 0; i < b.x.rows(); ++i)
    for (int h = 0; h < kNetHeads; ++h)
      if (b.masks(i, h) == 0.0) b.targets(i, h) = is_probability_head(h) ? 1.0 - b.targets(i, h) : 1e6;
  net.compute_gradients(b, w, nullptr);
  std::size_t k = 0;
  for (const auto& p : net.params()) {
    EXPECT_EQ(std::vector<double>(p.grad, p.grad + p.size), before[k++]);
  }
  EXPECT_EQ(net.loss(b, w), loss_before);
}

TEST(SharedNet, NonFiniteLossAborts) {
  SharedNuisanceNet net(2, small_config());
  HeadBatch b = random_batch(4, 2, 2);
  b.targets(0, 0) = std::numeric_limits<double>::infinity();
  b.masks(0, 0) = 1.0;
  EXPECT_THROW(net.backward_and_step(b, unit_head_weights(), nullptr), NumericalError);
}

TEST(SingleNet, LinearLayerRecoversLeastSquares) {
  const Index n = 200;
  Rng rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix x(n, 1);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = z(rng);
    y[i] = 2.0 * x(i, 0) + 1.0 + 0.1 * z(rng);
  }
  MLPConfig c;
  c.hidden = {};
  c.weight_decay = 0.0;
  c.learning_rate = 0.05;
  c.batch_size = static_cast<int>(n);
  c.epochs = 600;
  SingleOutputNet net(1, c);
  net.train(x, y, false);
  const FittedModel ls = fit_least_squares(x, y);
  EXPECT_NEAR(net.output_layer().w(0, 0), ls.parameters()[1], 1e-2);
  EXPECT_NEAR(net.output_layer().b[0], ls.parameters()[0], 1e-2);
}

TEST(SingleNet, FullBatchConvexLossIsMonotone) {
  const Index n = 100;
  Rng rng(6);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix x(n, 3);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = z(rng);
    y[i] = x(i, 0) - 2.0 * x(i, 2) + 0.5 + z(rng);
  }
  MLPConfig c;
  c.hidden = {};
  c.momentum = 0.0;
  c.learning_rate = 0.05;
  c.batch_size = static_cast<int>(n);
  c.epochs = 200;
  SingleOutputNet net(3, c);
  const TrainingReport r = net.train(x, y, false);
  ASSERT_EQ(r.epoch_losses.size(), 200u);
  for (std::size_t e = 1; e < r.epoch_losses.size(); ++e) {
    EXPECT_LE(r.epoch_losses[e], r.epoch_losses[e - 1] + 1e-12) << e;
  }
}

TEST(SharedNet, TrainingIsBitReproducible) {
  const PanelDataset d = sample_dataset1(300, 400, 1).dataset;
  MLPConfig c;
  c.hidden = {8, 8};
  c.epochs = 5;
  const NuisanceSet a = fit_nuisances_shared(d, c, 0.01);
  const NuisanceSet b = fit_nuisances_shared(d, c, 0.01);
  for (double v : {-1.5, 0.0, 0.3, 2.0}) {
    const auto x = std::span<const double>(&v, 1);
    const NuisanceValues va = a(x), vb = b(x);
    EXPECT_EQ(va.contrast(), vb.contrast());
    EXPECT_EQ(va.pi_e, vb.pi_e);
    EXPECT_EQ(va.pi_g, vb.pi_g);
  }
}

TEST(SharedNet, GroupHeadOnBalancedIndependentGroups) {
  // X has the same marginal in both groups of Dataset 1, so P(G=E|x) = 1/2.
  const PanelDataset d = sample_dataset1(3000, 3000, 2).dataset;
  MLPConfig c;
  c.epochs = 20;
  const NuisanceSet ns = fit_nuisances_shared(d, c, 0.01);
  for (double v = -2.0; v <= 2.0; v += 0.5) {
    EXPECT_NEAR(ns(std::span<const double>(&v, 1)).pi_g, 0.5, 0.05) << v;
  }
  EXPECT_DOUBLE_EQ(ns.p_o(), 0.5);
}

TEST(SharedNet, ExperimentalTreatedMeanCompetesWithPolynomial) {
  const GenOutput gen = sample_dataset1(10000, 15000, 3);
  const auto idx = split_indices(gen.dataset, {0.63, 0.27, 0.10}, 4);
  const PanelDataset train = gen.dataset.subset(idx.train);
  const PanelDataset held = gen.dataset.subset(idx.test);
  MLPConfig c;
  c.epochs = 30;
  c.learning_rate = 3e-3;
  const NuisanceSet net = fit_nuisances_shared(train, c, 0.01);
  const PanelView e1 = subgroup(train, Group::experimental, 1);
  const FittedModel poly = fit_polynomial(e1.x(), e1.s(), 2);
  const PanelView h = subgroup(held, Group::experimental, 1);
  const Matrix hx = h.x();
  const Vector hs = h.s();
  double se_net = 0.0, se_poly = 0.0;
  for (Index i = 0; i < hx.rows(); ++i) {
    const auto x = row_span(hx, i);
    se_net += std::pow(net(x).mu_s_e[1] - hs[i], 2);
    se_poly += std::pow(poly(x) - hs[i], 2);
  }
  EXPECT_LE(std::sqrt(se_net), 1.25 * std::sqrt(se_poly));
}
