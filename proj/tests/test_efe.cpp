#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "aif/efe.hpp"
#include "aif/errors.hpp"
#include "aif/oracle/quadrature.hpp"

using namespace aif;

namespace {

EfeConfig mode_config(InnerNormalization m) {
  EfeConfig c;
  c.inner_normalization = m;
  return c;
}

const EfeConfig kIncludeSelf = mode_config(InnerNormalization::include_self);
const EfeConfig kExcludeSelf = mode_config(InnerNormalization::exclude_self);

EnsembleModel random_model(std::uint64_t seed, std::size_t n = 4) {
  auto m = EnsembleModel::create({2, 1, {8}, Activation::tanh}, n, seed, {0.3, 0.3});
  m.normalizer = Normalizer::identity(2, 1);
  return m;
}

ActionPlan random_plan(std::size_t h, Rng& rng) {
  ActionPlan p = ActionPlan::zeros(h, 1);
  for (double& v : p.values) v = uniform(rng, -1, 1);
  return p;
}

double mean_info_gain(const EnsembleModel& m, const EfeConfig& cfg, std::size_t draws, std::uint64_t seed) {
  Rng rng(seed);
  const ActionPlan plan = ActionPlan::zeros(1, 1);
  const std::vector<double> x0{0.0};
  double s = 0.0;
  for (std::size_t d = 0; d < draws; ++d) s += info_gain_nmc(m, x0, plan, cfg, rng).info_gain;
  return s / static_cast<double>(draws);
}

}  // namespace

TEST(InfoGain, IdenticalParticlesIncludeSelfIsExact) {
  for (std::size_t n : {2u, 3u, 5u, 8u}) {
    auto m = random_model(1, n);
    for (auto& p : m.params.particles) p = m.params.particles[0];
    Rng rng(2);
    const auto plan = random_plan(5, rng);
    const std::vector<double> x0{0.3, -0.2};
    const double ig = info_gain_nmc(m, x0, plan, kIncludeSelf, rng).info_gain;
    EXPECT_EQ(ig, std::log(static_cast<double>(n) / static_cast<double>(n - 1))) << "n=" << n;
    EXPECT_EQ(info_gain_nmc(m, x0, plan, kExcludeSelf, rng).info_gain, 0.0) << "n=" << n;
  }
  Matrix same(5, 5);
  for (double& v : same.data) v = -3.7;
  EXPECT_EQ(info_gain_from_log_likelihoods(same, kIncludeSelf), std::log(1.25));
  EXPECT_NEAR(std::log(1.25), 0.2231436, 1e-7);
}

TEST(InfoGain, QuadratureOracleMatchesClosedForms) {
  // Two particles, self excluded: E_1[ln N(x;m1) - ln N(x;m2)] = KL = d^2 / (2 s^2).
  for (double d : {0.0, 0.5, 1.0, 2.0}) {
    const std::vector<double> means{0.0, d};
    EXPECT_NEAR(oracle::gaussian_family_info_gain(means, 1.0, InnerNormalization::exclude_self),
                0.5 * d * d, 1e-9);
    EXPECT_NEAR(oracle::gaussian_family_info_gain(means, 0.5, InnerNormalization::include_self),
                2.0 * d * d + std::log(2.0), 1e-9);
  }
  const std::vector<double> equal{0.4, 0.4, 0.4};
  EXPECT_NEAR(oracle::gaussian_family_info_gain(equal, 1.0, InnerNormalization::exclude_self), 0.0, 1e-12);
}

TEST(InfoGain, EstimatorMatchesQuadratureOracle) {
  const auto rows = oracle::bench_estimator(5, 100000, 1.0, 7);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_LT(std::abs(r.mean - r.oracle), 0.02) << r.mode;
    EXPECT_LT(r.std_error, 0.01) << r.mode;
  }
  EXPECT_NEAR(rows[0].oracle - rows[1].oracle, std::log(1.25), 1e-9);
}

TEST(InfoGain, EstimatorMatchesOracleOnOtherFamilies) {
  struct Case {
    std::vector<double> means;
    double sigma;
  };
  for (const auto& c : {Case{{-1.0, 0.0, 1.0}, 0.7}, Case{{0.0, 0.1}, 1.0}, Case{{-3.0, -1.0, 2.0, 2.5}, 1.5}}) {
    const auto m = oracle::gaussian_family_model(c.means, c.sigma);
    for (const auto& cfg : {kIncludeSelf, kExcludeSelf}) {
      const double est = mean_info_gain(m, cfg, 20000, 3);
      const double ref = oracle::gaussian_family_info_gain(c.means, c.sigma, cfg.inner_normalization);
      EXPECT_NEAR(est, ref, 0.03) << to_string(cfg.inner_normalization);
    }
  }
}

TEST(InfoGain, IncreasesWithParticleDisagreement) {
  std::vector<double> est, ref;
  for (double d : {0.0, 1.0, 2.0}) {
    const std::vector<double> means{0.0, d};
    const auto m = oracle::gaussian_family_model(means, 1.0);
    est.push_back(mean_info_gain(m, kIncludeSelf, 10000, 11));
    ref.push_back(oracle::gaussian_family_info_gain(means, 1.0, InnerNormalization::include_self));
  }
  EXPECT_LT(est[0], est[1]);
  EXPECT_LT(est[1], est[2]);
  EXPECT_LT(ref[0], ref[1]);
  EXPECT_LT(ref[1], ref[2]);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(est[k], ref[k], 0.05);
}

TEST(InfoGain, ExcludeSelfNonNegativeInExpectation) {
  for (const auto& means : {std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.3, 0.6},
                            std::vector<double>{-2.0, -1.0, 0.0, 1.0, 2.0}}) {
    EXPECT_GE(oracle::gaussian_family_info_gain(means, 1.0, InnerNormalization::exclude_self), -1e-12);
    const auto m = oracle::gaussian_family_model(means, 1.0);
    EXPECT_GE(mean_info_gain(m, kExcludeSelf, 10000, 13), -0.01);
  }
}

TEST(InfoGain, ModesDifferByConstant) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(100 + trial, 5);
    const auto plan = random_plan(4, rng);
    const std::vector<double> x0{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const auto res = info_gain_nmc(m, x0, plan, kIncludeSelf, rng);
    const double excluded = info_gain_from_log_likelihoods(res.log_likelihood, kExcludeSelf);
    EXPECT_NEAR(res.info_gain - excluded, std::log(1.25), 1e-12);
  }
}

TEST(InfoGain, LogDomainMatchesDirectDensities) {
  Rng rng(19);
  EfeConfig direct = kIncludeSelf;
  direct.log_domain = false;
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(200 + trial, 4);
    const auto plan = random_plan(3, rng);
    const std::vector<double> x0{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const auto res = info_gain_nmc(m, x0, plan, kIncludeSelf, rng);
    EXPECT_NEAR(res.info_gain, info_gain_from_log_likelihoods(res.log_likelihood, direct), 1e-8);
    EfeConfig dc = direct;
    dc.inner_normalization = InnerNormalization::exclude_self;
    EXPECT_NEAR(info_gain_from_log_likelihoods(res.log_likelihood, kExcludeSelf),
                info_gain_from_log_likelihoods(res.log_likelihood, dc), 1e-8);
  }
}

TEST(InfoGain, LogDomainSurvivesUnderflow) {
  Matrix L(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) L(i, k) = -5000.0 - 10.0 * static_cast<double>(i != k);
  const double ig = info_gain_from_log_likelihoods(L, kExcludeSelf);
  EXPECT_NEAR(ig, 10.0, 1e-12);
  EfeConfig direct = kExcludeSelf;
  direct.log_domain = false;
  EXPECT_THROW(info_gain_from_log_likelihoods(L, direct), NumericalError);
}

TEST(InfoGain, CountsRolloutsAndCrossEvaluations) {
  const auto m = random_model(5, 5);
  Rng rng(23);
  const auto plan = random_plan(3, rng);
  const std::vector<double> x0{0.0, 0.0};
  auto& c = efe_counters();
  c.reset();
  efe_objective(m, x0, plan, kIncludeSelf, rng);
  EXPECT_EQ(c.objective_calls.load(), 1u);
  EXPECT_EQ(c.rollouts.load(), 5u);
  EXPECT_EQ(c.cross_evaluations.load(), 20u);

  c.reset();
  const EfeBatchEvaluator eval(m, kIncludeSelf);
  std::vector<ActionPlan> plans{plan, random_plan(3, rng), random_plan(3, rng)};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  eval(x0, plans, seeds);
  EXPECT_EQ(c.objective_calls.load(), 3u);
  EXPECT_EQ(c.rollouts.load(), 15u);
  EXPECT_EQ(c.cross_evaluations.load(), 60u);
}

TEST(InfoGain, ConfigErrors) {
  EXPECT_THROW(info_gain_from_log_likelihoods(Matrix(1, 1), kIncludeSelf), ConfigError);
  EXPECT_THROW(info_gain_from_log_likelihoods(Matrix(3, 2), kIncludeSelf), ConfigError);
  EfeConfig bad;
  bad.intrinsic_weight = -0.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(inner_normalization_from_string("halfway"), ConfigError);
  EXPECT_EQ(inner_normalization_from_string("exclude_self"), InnerNormalization::exclude_self);
}

TEST(Extrinsic, MonteCarloMean) {
  TrajectorySample a, b;
  a.rewards = {0.0, 0.0};
  b.rewards = {0.0, 0.0};
  EXPECT_EQ(extrinsic_mc(std::vector<TrajectorySample>{a, b}), 0.0);
  a.rewards = {0.25, 0.75};
  b.rewards = {1.0, 2.0};
  EXPECT_EQ(extrinsic_mc(std::vector<TrajectorySample>{a, b}), 2.0);
  EXPECT_THROW(extrinsic_mc(std::vector<TrajectorySample>{}), ConfigError);
  b.rewards = {std::nan("")};
  EXPECT_THROW(extrinsic_mc(std::vector<TrajectorySample>{a, b}), NumericalError);
}

TEST(Extrinsic, ConstantRewardParticleGivesHorizonTimesC) {
  const double c = 0.37;
  const std::size_t h = 7;
  auto m = oracle::gaussian_family_model(std::vector<double>{0.0, 0.5}, 1.0, 1e-6);
  for (auto& p : m.params.particles) p.reward.layers.back().bias[0] = c;
  Rng rng(29);
  const std::vector<double> x0{0.0};
  const auto res = info_gain_nmc(m, x0, ActionPlan::zeros(h, 1), kIncludeSelf, rng);
  EXPECT_NEAR(extrinsic_mc(res.trajectories), static_cast<double>(h) * c, 1e-4);
}

TEST(Objective, ZeroWeightTotalIsNegativeExtrinsic) {
  const auto m = random_model(31);
  Rng rng(32);
  const auto plan = random_plan(4, rng);
  const std::vector<double> x0{0.1, 0.1};
  EfeConfig cfg = kIncludeSelf;
  cfg.intrinsic_weight = 0.0;
  for (bool skip : {false, true}) {
    cfg.skip_unweighted_intrinsic = skip;
    const auto e = efe_objective(m, x0, plan, cfg, rng);
    EXPECT_EQ(e.total, -e.extrinsic);
    EXPECT_EQ(e.intrinsic_evaluated, !skip);
  }
}

TEST(Objective, UnitWeightTotalIsNegatedSum) {
  const auto m = random_model(33);
  Rng rng(34);
  for (int trial = 0; trial < 10; ++trial) {
    const auto e = efe_objective(m, std::vector<double>{0.2, -0.1}, random_plan(3, rng), kIncludeSelf, rng);
    EXPECT_EQ(e.total, -(e.intrinsic + e.extrinsic));
    EXPECT_TRUE(std::isfinite(e.total));
  }
}

TEST(Objective, IdenticalZeroRewardParticlesGiveZero) {
  auto m = oracle::gaussian_family_model(std::vector<double>{0.3, 0.3, 0.3}, 0.5);
  EfeConfig cfg = kExcludeSelf;
  cfg.noise_mode = NoiseMode::mean;
  Rng rng(35);
  const auto e = efe_objective(m, std::vector<double>{0.0}, ActionPlan::zeros(4, 1), cfg, rng);
  EXPECT_EQ(e.intrinsic, 0.0);
  EXPECT_EQ(e.extrinsic, 0.0);
  EXPECT_EQ(e.total, 0.0);
}

TEST(Objective, BatchEvaluatorReproducesSingleCallsBitwise) {
  const auto m = random_model(37, 5);
  Rng rng(38);
  std::vector<ActionPlan> plans;
  std::vector<std::uint64_t> seeds;
  for (int c = 0; c < 9; ++c) {
    plans.push_back(random_plan(6, rng));
    seeds.push_back(rng());
  }
  const std::vector<double> x0{0.4, -0.4};
  std::vector<EfeConfig> cfgs{kIncludeSelf, kExcludeSelf};
  EfeConfig mean = kIncludeSelf;
  mean.noise_mode = NoiseMode::mean;
  cfgs.push_back(mean);
  EfeConfig zero = kIncludeSelf;
  zero.intrinsic_weight = 0.0;
  cfgs.push_back(zero);
  zero.skip_unweighted_intrinsic = true;
  cfgs.push_back(zero);
  EfeConfig half = kExcludeSelf;
  half.intrinsic_weight = 0.5;
  cfgs.push_back(half);
  for (const auto& cfg : cfgs) {
    const EfeBatchEvaluator eval(m, cfg);
    const auto batch = eval(x0, plans, seeds);
    for (std::size_t c = 0; c < plans.size(); ++c) {
      Rng r(seeds[c]);
      const auto single = efe_objective(m, x0, plans[c], cfg, r);
      EXPECT_EQ(batch[c].intrinsic, single.intrinsic);
      EXPECT_EQ(batch[c].extrinsic, single.extrinsic);
      EXPECT_EQ(batch[c].total, single.total);
    }
  }
}

TEST(Objective, RankingInvariantUnderNormalizationMode) {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = random_model(300 + trial, 5);
    std::vector<ActionPlan> plans;
    std::vector<std::uint64_t> seeds;
    for (int c = 0; c < 20; ++c) {
      plans.push_back(random_plan(5, rng));
      seeds.push_back(rng());
    }
    const std::vector<double> x0{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const auto a = EfeBatchEvaluator(m, kIncludeSelf)(x0, plans, seeds);
    const auto b = EfeBatchEvaluator(m, kExcludeSelf)(x0, plans, seeds);
    std::vector<std::size_t> ia(20), ib(20);
    std::iota(ia.begin(), ia.end(), 0);
    std::iota(ib.begin(), ib.end(), 0);
    std::stable_sort(ia.begin(), ia.end(), [&](auto x, auto y) { return a[x].total < a[y].total; });
    std::stable_sort(ib.begin(), ib.end(), [&](auto x, auto y) { return b[x].total < b[y].total; });
    EXPECT_EQ(ia, ib);
  }
}
