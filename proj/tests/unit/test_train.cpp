#include "htn/verify.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace htn;

namespace {

std::vector<Sample> toy_set() {
  const std::vector<double> a{0.0, 0.1}, b{1.0, 0.9};
  return {{encode_rotational(a), LabelState(0, 2)}, {encode_rotational(b), LabelState(1, 2)}};
}

std::vector<Sample> random_set(const HtnModel& m, std::size_t n, std::mt19937_64& rng) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(verify::random_sample(m, rng));
  return out;
}

double max_site_difference(const HtnModel& a, const HtnModel& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.n_sites(); ++k) {
    worst = std::max(worst, (a.site(k) - b.site(k)).norm());
    for (std::size_t r = 0; r < a.xi(); ++r) worst = std::max(worst, std::abs(a.theta(k)[r] - b.theta(k)[r]));
  }
  return worst;
}

}  // namespace

// ---- Adam -----------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
  AdamState s;
  adam_step(p, g, s, {});
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Adam, FirstStepClosedForm) {
  std::vector<double> p{0.5, 0.5, 0.5}, g{2.0, -0.3, 1e-3};
  const AdamConfig cfg;
  AdamState s;
  adam_step(p, g, s, cfg);
  for (std::size_t i = 0; i < p.size(); ++i)
    EXPECT_NEAR(p[i], 0.5 - cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps), 1e-15);
}

TEST(Adam, ConstantGradientDescends) {
  std::vector<double> p{0.0}, g{0.7};
  AdamState s;
  for (int i = 0; i < 100; ++i) adam_step(p, g, s, {});
  EXPECT_LT(p[0], -0.5);
}

TEST(SweepConfig, Validation) {
  SweepConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n_sweeps = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.adam.lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.adam.beta2 = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

// ---- environments ---------------------------------------------------------

TEST(EnvironmentCache, WindowContractionMatchesForward) {
  std::mt19937_64 rng(30);
  for (int i = 0; i < 10; ++i) {
    const HtnModel m = verify::random_model(rng, 5, 4, 3, 2);
    const auto batch = random_set(m, 3, rng);
    EnvironmentCache cache(m, batch);
    for (std::size_t k = 0; k < m.n_sites(); ++k) EXPECT_LT(cache.window_deviation(m, k), 1e-12);
  }
}

TEST(EnvironmentCache, WindowLossAndGradientMatchFullEvaluation) {
  std::mt19937_64 rng(31);
  const HtnModel m = verify::random_model(rng, 4, 3, 3, 4);
  const auto batch = random_set(m, 4, rng);
  const auto cfg = LossConfig::threshold(0.2, 0.02);
  EnvironmentCache cache(m, batch);
  const auto full = loss_and_gradient(batch, m, cfg);
  for (std::size_t k = 0; k + 1 < m.n_sites(); ++k) {
    const auto ev = evaluate_window(m, cache, k, cfg, true);
    EXPECT_NEAR(ev.loss.value, full.loss.value, 1e-12);
    EXPECT_LT((ev.grad_left - full.sites[k]).norm(), 1e-10);
    EXPECT_LT((ev.grad_right - full.sites[k + 1]).norm(), 1e-10);
    for (std::size_t r = 0; r < m.xi(); ++r) {
      EXPECT_NEAR(ev.grad_theta_left[r], full.thetas[k][r], 1e-10);
      EXPECT_NEAR(ev.grad_theta_right[r], full.thetas[k + 1][r], 1e-10);
    }
  }
}

TEST(EnvironmentCache, DetectsStaleEnvironments) {
  std::mt19937_64 rng(32);
  HtnModel m = HtnModel::random(4, 4, 2, {2}, 3);
  const auto batch = random_set(m, 3, rng);
  EnvironmentCache cache(m, batch);
  m.set_site(3, HtnModel::random(4, 4, 2, {2}, 4).site(3));
  EXPECT_THROW(cache.verify(m, 0), CacheInconsistencyError);
  cache.rebuild(m);
  EXPECT_NO_THROW(cache.verify(m, 0));
}

TEST(EnvironmentCache, RejectsSiteCountMismatch) {
  const HtnModel m = HtnModel::random(3, 2, 2, {2}, 1);
  const std::vector<double> x{0.2, 0.4};
  const std::vector<Sample> batch{{encode_rotational(x), LabelState(0, 2)}};
  EXPECT_THROW(EnvironmentCache(m, batch), ShapeError);
}

// ---- sweeps ---------------------------------------------------------------

TEST(Sweep, ZeroStepsIsANoOp) {
  std::mt19937_64 rng(33);
  HtnModel m = verify::random_model(rng, 4, 3, 2, 4);
  const HtnModel before = m;
  const auto batch = random_set(m, 5, rng);
  const auto cfg = LossConfig::full(0.01);
  EnvironmentCache cache(m, batch);
  SweepConfig sc;
  sc.adam_steps_per_site = 0;
  sc.check_cache = true;
  const double l0 = evaluate_loss(batch, m, cfg).value;
  sweep(m, cfg, sc, cache);
  EXPECT_LT(std::abs(evaluate_loss(batch, m, cfg).value - l0), 1e-8);
  EXPECT_EQ(max_site_difference(m, before), 0.0);
}

TEST(Sweep, ToySetLossDecreasesMonotonically) {
  HtnModel m = HtnModel::random(2, 2, 2, {2}, 7);
  const auto batch = toy_set();
  const auto cfg = LossConfig::full(0.01);
  EnvironmentCache cache(m, batch);
  SweepConfig sc;
  sc.adam_steps_per_site = 100;
  sc.check_cache = true;
  const double l0 = evaluate_loss(batch, m, cfg).value;
  const auto metrics = sweep(m, cfg, sc, cache);
  ASSERT_FALSE(metrics.bond_losses.empty());
  EXPECT_LT(metrics.final_loss, l0);
  double prev = l0;
  for (double l : metrics.bond_losses) {
    EXPECT_LE(l, prev + 1e-6);
    prev = l;
  }
  EXPECT_NEAR(metrics.final_loss, evaluate_loss(batch, m, cfg).value, 1e-9);
}

TEST(Sweep, KeepsInvariantsAndCacheConsistent) {
  std::mt19937_64 rng(34);
  HtnModel m = verify::random_model(rng, 5, 4, 3, 5);
  const auto batch = random_set(m, 6, rng);
  const auto cfg = LossConfig::weight(0.5, 0.01);
  EnvironmentCache cache(m, batch);
  SweepConfig sc;
  sc.adam_steps_per_site = 5;
  sc.check_cache = true;
  const auto metrics = sweep(m, cfg, sc, cache);
  EXPECT_NO_THROW(m.check_invariants());
  EXPECT_EQ(metrics.bond_positions, (std::vector<std::size_t>{0, 1, 2, 3, 2, 1, 0}));
  EXPECT_NEAR(metrics.final_loss, evaluate_loss(batch, m, cfg).value, 1e-9);
}

TEST(Sweep, SingleSiteChainUsesOneWindow) {
  HtnModel m = HtnModel::random(1, 2, 2, {2}, 9);
  const std::vector<double> x{0.3};
  const std::vector<Sample> batch{{encode_rotational(x), LabelState(1, 2)}};
  EnvironmentCache cache(m, batch);
  SweepConfig sc;
  sc.adam_steps_per_site = 10;
  const auto metrics = sweep(m, LossConfig::full(0.01), sc, cache);
  EXPECT_EQ(metrics.bond_positions, (std::vector<std::size_t>{0}));
}

TEST(Train, DeterministicGivenSeed) {
  std::mt19937_64 rng(35);
  const HtnModel start = verify::random_model(rng, 4, 3, 2, 4);
  const auto batch = random_set(start, 6, rng);
  SweepConfig sc;
  sc.n_sweeps = 2;
  sc.adam_steps_per_site = 4;
  HtnModel a = start, b = start;
  const auto ra = train(a, batch, batch, LossConfig::threshold(0.1), sc, start.output_dim());
  const auto rb = train(b, batch, batch, LossConfig::threshold(0.1), sc, start.output_dim());
  EXPECT_EQ(max_site_difference(a, b), 0.0);
  ASSERT_EQ(ra.sweeps.size(), 2u);
  EXPECT_EQ(ra.sweeps.back().train.loss, rb.sweeps.back().train.loss);
}

TEST(Train, ReportsBoundedMetrics) {
  std::mt19937_64 rng(36);
  HtnModel m = verify::random_model(rng, 4, 3, 3, 4);
  const auto batch = random_set(m, 8, rng);
  SweepConfig sc;
  sc.n_sweeps = 1;
  sc.adam_steps_per_site = 3;
  const auto rep = train(m, batch, batch, LossConfig::full(), sc, m.output_dim());
  for (const auto& rec : {rep.initial, rep.sweeps.back()})
    for (const auto& s : {rec.train, rec.test}) {
      EXPECT_GE(s.accuracy, 0.0);
      EXPECT_LE(s.accuracy, 1.0);
      EXPECT_GE(s.retained_trace, 0.0);
      EXPECT_LE(s.retained_trace, 1.0 + 1e-12);
      EXPECT_GE(s.abstention, 0.0);
      EXPECT_LE(s.abstention, 1.0);
    }
}

TEST(Train, TrivialThresholdNeverBeatsIdentityReductions) {
  // At t = 1 the normalization divides by 1, so swapping in D = I can only help.
  const std::vector<double> a{0.2, 0.7, 0.1}, b{0.8, 0.3, 0.9};
  const std::vector<Sample> batch{{encode_rotational(a), LabelState(0, 2)},
                                  {encode_rotational(b), LabelState(1, 2)}};
  HtnModel m = HtnModel::random(3, 2, 2, {2}, 13);
  SweepConfig sc;
  sc.n_sweeps = 2;
  sc.adam_steps_per_site = 10;
  const auto cfg = LossConfig::threshold(1.0, 0.01);
  train(m, batch, batch, cfg, sc, 2);
  const double trained = evaluate_loss(batch, m, cfg).value;
  const double with_identity = evaluate_loss(batch, m.with_identity_reductions(), cfg).value;
  EXPECT_LE(with_identity, trained + 1e-12);
}

// ---- data-derived initialization ------------------------------------------

TEST(InitFromData, SatisfiesInvariants) {
  std::mt19937_64 rng(37);
  const HtnModel shape = HtnModel::random(4, 4, 2, {2, 2}, 1);
  const auto data = random_set(shape, 30, rng);
  const HtnModel m = init_from_data(data, 4, 2, {2, 2}, 5);
  EXPECT_NO_THROW(m.check_invariants());
  for (std::size_t k = 0; k < m.n_sites(); ++k)
    for (double d : m.reduction(k)) EXPECT_NEAR(d, 1.0, 1e-5);
}

TEST(InitFromData, SingleSampleBeatsMaximallyMixedBaseline) {
  const std::vector<double> x{0.9, 0.2, 0.6, 0.4};
  const std::vector<Sample> one{{encode_rotational(x), LabelState(2, 4)}};
  const HtnModel m = init_from_data(one, 8, 2, {2, 2}, 1);
  const auto cfg = LossConfig::full(0.01);
  const double baseline = cross_entropy_term(depolarize(DensityMatrix::maximally_mixed(4), 0.01), 2);
  EXPECT_LE(evaluate_loss(one, m, cfg).value, baseline);
}

TEST(InitFromData, RejectsBadArguments) {
  const std::vector<double> x{0.5, 0.5};
  const std::vector<Sample> one{{encode_rotational(x), LabelState(0, 2)}};
  EXPECT_THROW(init_from_data(one, 0, 2, {2}, 1), std::invalid_argument);
  EXPECT_THROW(init_from_data(one, 2, 0, {2}, 1), std::invalid_argument);
  EXPECT_THROW(init_from_data({}, 2, 2, {2}, 1), std::invalid_argument);
}
