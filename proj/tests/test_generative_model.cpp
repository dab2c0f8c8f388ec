#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "aif/errors.hpp"
#include "aif/generative_model.hpp"

using namespace aif;

namespace {

constexpr double kLn2Pi = 1.8378770664093453;  // ln(2 pi)

EnsembleModel small_model(std::uint64_t seed, bool identity_norm) {
  auto m = EnsembleModel::create({3, 2, {8, 8}, Activation::tanh}, 3, seed, {0.1, 0.2});
  if (identity_norm) {
    m.normalizer = Normalizer::identity(3, 2);
  } else {
    Rng rng(seed + 100);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> x{uniform(rng, -2, 2), uniform(rng, 0, 1), uniform(rng, -5, 5)};
      std::vector<double> a{uniform(rng, -1, 1), uniform(rng, -1, 1)};
      std::vector<double> y{x[0] + uniform(rng, -0.1, 0.1), x[1] * 0.5, x[2] + a[0]};
      m.normalizer.observe(x, a, y, uniform(rng, 0, 1));
    }
  }
  return m;
}

ActionPlan random_plan(std::size_t h, std::size_t da, Rng& rng) {
  ActionPlan p = ActionPlan::zeros(h, da);
  for (double& v : p.values) v = uniform(rng, -1, 1);
  return p;
}

// Independent evaluation of one step's means straight from the networks.
struct StepMeans {
  std::vector<double> x;
  double r;
};

StepMeans reference_means(const EnsembleModel& m, std::size_t i, const std::vector<double>& prev,
                          std::span<const double> a, const std::vector<double>& next) {
  const auto& n = m.normalizer;
  std::vector<double> in;
  for (std::size_t j = 0; j < prev.size(); ++j) in.push_back((prev[j] - n.state.shift_of(j)) / n.state.scale_of(j));
  for (std::size_t j = 0; j < a.size(); ++j) in.push_back((a[j] - n.action.shift_of(j)) / n.action.scale_of(j));
  const auto d = forward(m.params.particles[i].dynamics, in);
  StepMeans s;
  for (std::size_t j = 0; j < prev.size(); ++j)
    s.x.push_back(prev[j] + (n.delta.shift_of(j) + n.delta.scale_of(j) * d[j]));
  std::vector<double> rin;
  for (std::size_t j = 0; j < next.size(); ++j) rin.push_back((next[j] - n.state.shift_of(j)) / n.state.scale_of(j));
  for (std::size_t j = 0; j < a.size(); ++j) rin.push_back((a[j] - n.action.shift_of(j)) / n.action.scale_of(j));
  s.r = n.reward.shift_of(0) + n.reward.scale_of(0) * forward(m.params.particles[i].reward, rin)[0];
  return s;
}

// Per-step Gaussian log densities on delta- and reward-normalized residuals.
double reference_log_prob(const EnsembleModel& m, std::size_t i, const std::vector<double>& x0,
                          const ActionPlan& plan, const TrajectorySample& traj) {
  const auto& n = m.normalizer;
  const double sx = m.heads.sigma_x, sr = m.heads.sigma_r;
  double total = 0.0;
  std::vector<double> prev = x0;
  for (std::size_t t = 0; t < plan.horizon; ++t) {
    const auto means = reference_means(m, i, prev, plan.at(t), traj.states[t]);
    for (std::size_t j = 0; j < prev.size(); ++j) {
      const double z = (traj.states[t][j] - means.x[j]) / n.delta.scale_of(j) / sx;
      total += -0.5 * z * z - std::log(sx) - 0.5 * kLn2Pi;
    }
    const double zr = (traj.rewards[t] - means.r) / n.reward.scale_of(0) / sr;
    total += -0.5 * zr * zr - std::log(sr) - 0.5 * kLn2Pi;
    prev = traj.states[t];
  }
  return total;
}

}  // namespace

TEST(Rollout, SingleStepMeanModeEqualsNetworkMean) {
  for (bool identity : {true, false}) {
    const auto m = small_model(1, identity);
    Rng rng(2);
    const auto plan = random_plan(1, 2, rng);
    const std::vector<double> x0{0.3, 0.2, -1.0};
    const auto tr = rollout(m, 1, x0, plan, NoiseMode::mean, rng);
    ASSERT_EQ(tr.states.size(), 1u);
    EXPECT_TRUE(tr.noise_draws.empty());
    const auto ref = reference_means(m, 1, x0, plan.at(0), tr.states[0]);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(tr.states[0][j], ref.x[j], 1e-12);
    EXPECT_NEAR(tr.rewards[0], ref.r, 1e-12);
  }
}

TEST(Rollout, ZeroNoiseSampledEqualsMean) {
  auto m = small_model(3, false);
  m.heads = {0.0, 0.0};
  Rng rng(4), r1(5);
  const auto plan = random_plan(6, 2, rng);
  const std::vector<double> x0{0.1, 0.9, 2.0};
  const auto a = rollout(m, 0, x0, plan, NoiseMode::mean, r1);
  const auto b = rollout(m, 0, x0, plan, NoiseMode::sampled, r1);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.rewards, b.rewards);
}

TEST(Rollout, DeterministicGivenRng) {
  const auto m = small_model(5, false);
  Rng rng(6);
  const auto plan = random_plan(8, 2, rng);
  const std::vector<double> x0{0.1, 0.9, 2.0};
  Rng a(77), b(77);
  EXPECT_EQ(rollout(m, 2, x0, plan, NoiseMode::sampled, a), rollout(m, 2, x0, plan, NoiseMode::sampled, b));
}

TEST(Rollout, DivergenceReportsStep) {
  auto m = small_model(7, true);
  m.params.particles[0].dynamics.layers.back().bias[0] = 1e308;
  Rng rng(8);
  const auto plan = random_plan(5, 2, rng);
  const std::vector<double> x0{0.0, 0.0, 0.0};
  try {
    rollout(m, 0, x0, plan, NoiseMode::mean, rng);
    FAIL() << "expected divergence";
  } catch (const RolloutDivergence& e) {
    EXPECT_EQ(e.step(), 1u);  // 1e308 at step 0, overflow at step 1
  }
}

TEST(Rollout, ShapeErrors) {
  const auto m = small_model(1, true);
  Rng rng(1);
  EXPECT_THROW(rollout(m, 0, std::vector<double>{0.0, 0.0}, ActionPlan::zeros(2, 2), NoiseMode::mean, rng), ShapeError);
  EXPECT_THROW(rollout(m, 0, std::vector<double>{0, 0, 0}, ActionPlan::zeros(2, 1), NoiseMode::mean, rng), ShapeError);
  EXPECT_THROW(rollout(m, 0, std::vector<double>{0, 0, 0}, ActionPlan::zeros(0, 2), NoiseMode::mean, rng), ShapeError);
}

TEST(Rollout, BatchColumnsMatchSingleRollouts) {
  const auto m = small_model(9, false);
  Rng rng(10);
  std::vector<ActionPlan> plans;
  for (int c = 0; c < 7; ++c) plans.push_back(random_plan(4, 2, rng));
  const std::vector<double> x0{0.5, 0.5, 0.5};
  std::vector<TrajectorySample> singles;
  for (std::size_t c = 0; c < plans.size(); ++c) {
    Rng r(1000 + c);
    singles.push_back(rollout(m, 1, x0, plans[c], NoiseMode::sampled, r));
  }
  const auto batch = rollout_batch(m, 1, x0, plans, NoiseMode::sampled,
                                   [&](std::size_t c, std::size_t t) -> std::span<const double> {
                                     return singles[c].noise_draws[t];
                                   });
  for (std::size_t c = 0; c < plans.size(); ++c) {
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(batch.states[t](j, c), singles[c].states[t][j]);
      EXPECT_EQ(batch.rewards[t](0, c), singles[c].rewards[t]);
    }
    EXPECT_EQ(batch.log_prob[c], traj_log_prob(m, 1, x0, plans[c], singles[c]));
  }
}

TEST(TrajLogProb, SelfMeanModeIsAnalyticMaximum) {
  const auto m = small_model(11, false);
  Rng rng(12);
  const std::size_t h = 5;
  const auto plan = random_plan(h, 2, rng);
  const std::vector<double> x0{0.2, 0.4, 0.6};
  const auto tr = rollout(m, 2, x0, plan, NoiseMode::mean, rng);
  const double expected =
      -static_cast<double>(h) * (1.5 * std::log(2 * std::numbers::pi * 0.01) + 0.5 * std::log(2 * std::numbers::pi * 0.04));
  EXPECT_NEAR(traj_log_prob(m, 2, x0, plan, tr), expected, 1e-12);
}

TEST(TrajLogProb, IdenticalWeightsGiveIdenticalValue) {
  auto m = small_model(13, false);
  m.params.particles[1] = m.params.particles[0];
  Rng rng(14);
  const auto plan = random_plan(4, 2, rng);
  const std::vector<double> x0{0.0, 1.0, 0.0};
  const auto tr = rollout(m, 2, x0, plan, NoiseMode::sampled, rng);
  EXPECT_EQ(traj_log_prob(m, 0, x0, plan, tr), traj_log_prob(m, 1, x0, plan, tr));
}

TEST(TrajLogProb, MatchesPerStepOracle) {
  for (bool identity : {true, false}) {
    const auto m = small_model(15, identity);
    Rng rng(16);
    for (int trial = 0; trial < 10; ++trial) {
      const auto plan = random_plan(3, 2, rng);
      const std::vector<double> x0{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)};
      const auto tr = rollout(m, trial % 3, x0, plan, NoiseMode::sampled, rng);
      for (std::size_t k = 0; k < 3; ++k)
        EXPECT_NEAR(traj_log_prob(m, k, x0, plan, tr), reference_log_prob(m, k, x0, plan, tr), 1e-10);
    }
  }
}

TEST(TrajLogProb, SampledPathDensityFromRetainedNoise) {
  const auto m = small_model(17, false);
  Rng rng(18);
  const auto plan = random_plan(6, 2, rng);
  const std::vector<double> x0{0.3, 0.3, 0.3};
  const auto tr = rollout(m, 0, x0, plan, NoiseMode::sampled, rng);
  double expected = 0.0;
  for (const auto& eps : tr.noise_draws) {
    for (std::size_t j = 0; j < 3; ++j) expected += -0.5 * eps[j] * eps[j] - std::log(0.1) - 0.5 * kLn2Pi;
    expected += -0.5 * eps[3] * eps[3] - std::log(0.2) - 0.5 * kLn2Pi;
  }
  EXPECT_NEAR(traj_log_prob(m, 0, x0, plan, tr), expected, 1e-10);
}

TEST(TrajLogProb, PerturbationLowersSelfDensity) {
  const auto m = small_model(19, true);
  Rng rng(20);
  const auto plan = random_plan(4, 2, rng);
  const std::vector<double> x0{0.1, 0.2, 0.3};
  const auto tr = rollout(m, 1, x0, plan, NoiseMode::mean, rng);
  const double base = traj_log_prob(m, 1, x0, plan, tr);
  for (std::size_t t = 0; t < 4; ++t) {
    auto p = tr;
    p.states[t][1] += 1e-3;
    EXPECT_LT(traj_log_prob(m, 1, x0, plan, p), base);
    auto q = tr;
    q.rewards[t] -= 0.05;
    EXPECT_LT(traj_log_prob(m, 1, x0, plan, q), base);
  }
}

TEST(TrajLogProb, LengthMismatchIsShapeError) {
  const auto m = small_model(21, true);
  Rng rng(22);
  const auto plan = random_plan(4, 2, rng);
  const std::vector<double> x0{0, 0, 0};
  auto tr = rollout(m, 0, x0, plan, NoiseMode::mean, rng);
  tr.states.pop_back();
  tr.rewards.pop_back();
  EXPECT_THROW(traj_log_prob(m, 0, x0, plan, tr), ShapeError);
}

TEST(ActionPlanTest, BoundsValidation) {
  const auto bounds = ActionBounds::symmetric(2, 1.0);
  auto p = ActionPlan::zeros(3, 2);
  EXPECT_NO_THROW(p.validate(bounds));
  p.at(1)[0] = 1.5;
  EXPECT_THROW(p.validate(bounds), ConfigError);
  EXPECT_THROW(ActionPlan::zeros(0, 2).validate(bounds), ShapeError);
  EXPECT_THROW(ActionPlan::zeros(2, 3).validate(bounds), ShapeError);
  EXPECT_EQ(bounds.clip(0, -4.0), -1.0);
  EXPECT_EQ(bounds.midpoint(1), 0.0);
}
