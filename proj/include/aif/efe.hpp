#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "aif/ensemble.hpp"
#include "aif/errors.hpp"
#include "aif/generative_model.hpp"
#include "aif/random.hpp"

namespace aif {

/// Prefactor of the inner (marginal likelihood) average over the n - 1
/// particles k != i: 1/n as written in the estimator, or the unbiased 1/(n-1).
/// The two differ by the constant ln(n/(n-1)) in the information gain.
enum class InnerNormalization { include_self, exclude_self };

inline std::string to_string(InnerNormalization m) {
  return m == InnerNormalization::include_self ? "include_self" : "exclude_self";
}

inline InnerNormalization inner_normalization_from_string(const std::string& s) {
  if (s == "include_self") return InnerNormalization::include_self;
  if (s == "exclude_self")
    return InnerNormalization::exclude_self;
  throw ConfigError("unknown inner normalization '" + s + "'", "inner_normalization");
}

struct EfeConfig {
  InnerNormalization inner_normalization = InnerNormalization::include_self;
  double intrinsic_weight = 1.0;
  bool log_domain = true;
  NoiseMode noise_mode = NoiseMode::sampled;
  /// With intrinsic_weight == 0 the information gain does not affect the
  /// objective; this skips the n^2 cross evaluations in that case.
  bool skip_unweighted_intrinsic = false;

  void validate() const {
    if (!(intrinsic_weight >= 0.0) || !std::isfinite(intrinsic_weight))
      throw ConfigError("intrinsic_weight must be finite and >= 0", "intrinsic_weight");
  }
};

struct EfeEstimate {
  double intrinsic = 0.0;  // expected information gain, nats
  double extrinsic = 0.0;  // expected cumulative reward
  double total = 0.0;      // -(w * intrinsic) - extrinsic
  bool intrinsic_evaluated = true;
};

inline EfeEstimate make_estimate(double info_gain, double extrinsic, double weight,
                                 bool evaluated = true) {
  EfeEstimate e;
  e.intrinsic = info_gain;
  e.extrinsic = extrinsic;
  e.total = weight == 0.0 ? -extrinsic : -(weight * info_gain) - extrinsic;
  e.intrinsic_evaluated = evaluated;
  return e;
}

/// Instrumentation for tests: how many objective evaluations, particle
/// rollouts and cross-particle trajectory likelihoods have been computed.
struct EfeCounters {
  std::atomic<std::uint64_t> objective_calls{0};
  std::atomic<std::uint64_t> rollouts{0};
  std::atomic<std::uint64_t> cross_evaluations{0};

  void reset() {
    objective_calls = 0;
    rollouts = 0;
    cross_evaluations = 0;
  }
};

inline EfeCounters& efe_counters() {
  static EfeCounters counters;
  return counters;
}

/// Nested Monte Carlo information gain from the n x n matrix of trajectory
/// log likelihoods, log_lik[i][k] = ln p(traj_i | particle k). The inner
/// average for trajectory i reuses every other particle k != i.
inline double info_gain_from_log_likelihoods(const Matrix& log_lik, const EfeConfig& cfg) {
  const std::size_t n = log_lik.rows;
  if (n < 2 || log_lik.cols != n) throw ConfigError("information gain needs n >= 2 particles", "n");
  const double z = cfg.inner_normalization == InnerNormalization::include_self
                       ? static_cast<double>(n)
                       : static_cast<double>(n - 1);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double self = log_lik(i, i);
    if (cfg.log_domain) {
      // ln p_ii - ln((1/Z) sum_k p_ik) = ln(Z / sum_k exp(L_ik - L_ii - m)) - m
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k)
        if (k != i) m = std::max(m, log_lik(i, k) - self);
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (k != i) s += std::exp(log_lik(i, k) - self - m);
      terms[i] = std::log(z / s) - m;
    } else {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (k != i) s += std::exp(log_lik(i, k));
      if (!(s > 0.0)) throw NumericalError("inner likelihood sum underflowed");
      terms[i] = self - std::log(s / z);
    }
  }
  // Mean about the first term: n equal terms average to exactly that term.
  double dev = 0.0;
  for (std::size_t i = 1; i < n; ++i) dev += terms[i] - terms[0];
  const double ig = terms[0] + dev / static_cast<double>(n);
  if (!std::isfinite(ig)) throw NumericalError("non-finite information gain");
  return ig;
}

struct InfoGainResult {
  double info_gain = 0.0;
  std::vector<TrajectorySample> trajectories;
  Matrix log_likelihood;  // [i][k] = ln p(traj_i | particle k)
};

/// One imagined trajectory per particle (drawn in particle order from `rng`),
/// then the sample-reusing NMC estimate of the expected information gain.
inline InfoGainResult info_gain_nmc(const EnsembleModel& model, std::span<const double> x0,
                                    const ActionPlan& plan, const EfeConfig& cfg, Rng& rng) {
  const std::size_t n = model.size();
  if (n < 2) throw ConfigError("information gain needs n >= 2 particles", "n");
  cfg.validate();
  auto& counters = efe_counters();
  InfoGainResult res;
  res.trajectories.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    res.trajectories.push_back(rollout(model, i, x0, plan, cfg.noise_mode, rng));
  counters.rollouts += n;
  res.log_likelihood = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      res.log_likelihood(i, k) = traj_log_prob(model, k, x0, plan, res.trajectories[i]);
  counters.cross_evaluations += n * (n - 1);
  res.info_gain = info_gain_from_log_likelihoods(res.log_likelihood, cfg);
  return res;
}

/// Mean over trajectories of the cumulative imagined reward.
inline double extrinsic_mc(std::span<const TrajectorySample> trajs) {
  if (trajs.empty()) throw ConfigError("no trajectories for the extrinsic estimate", "trajectories");
  double total = 0.0;
  for (const auto& tr : trajs) {
    double s = 0.0;
    for (double r : tr.rewards) s += r;
    total += s;
  }
  const double v = total / static_cast<double>(trajs.size());
  if (!std::isfinite(v)) throw NumericalError("non-finite extrinsic estimate");
  return v;
}

/// Expected free energy of `plan`; both terms share one rollout pass.
inline EfeEstimate efe_objective(const EnsembleModel& model, std::span<const double> x0,
                                 const ActionPlan& plan, const EfeConfig& cfg, Rng& rng) {
  cfg.validate();
  efe_counters().objective_calls += 1;
  if (cfg.intrinsic_weight == 0.0 && cfg.skip_unweighted_intrinsic) {
    std::vector<TrajectorySample> trajs;
    for (std::size_t i = 0; i < model.size(); ++i)
      trajs.push_back(rollout(model, i, x0, plan, cfg.noise_mode, rng));
    efe_counters().rollouts += model.size();
    return make_estimate(0.0, extrinsic_mc(trajs), 0.0, false);
  }
  const auto ig = info_gain_nmc(model, x0, plan, cfg, rng);
  return make_estimate(ig.info_gain, extrinsic_mc(ig.trajectories), cfg.intrinsic_weight);
}

/// Batched evaluation of many plans from one x0. Plan c draws its noise from
/// Rng(seeds[c]) in the same order as `efe_objective`, so
/// evaluate(x0, plans, seeds)[c] equals efe_objective(..., plans[c], ...,
/// Rng(seeds[c])) bit for bit.
class EfeBatchEvaluator {
 public:
  EfeBatchEvaluator(const EnsembleModel& model, EfeConfig cfg) : model_(model), cfg_(cfg) {
    cfg_.validate();
    if (model_.size() < 2) throw ConfigError("information gain needs n >= 2 particles", "n");
  }

  const EfeConfig& config() const { return cfg_; }

  std::vector<EfeEstimate> operator()(std::span<const double> x0, std::span<const ActionPlan> plans,
                                      std::span<const std::uint64_t> seeds) const {
    return evaluate(x0, plans, seeds);
  }

  std::vector<EfeEstimate> evaluate(std::span<const double> x0, std::span<const ActionPlan> plans,
                                    std::span<const std::uint64_t> seeds) const {
    const std::size_t count = plans.size();
    if (count == 0) return {};
    if (seeds.size() != count) throw ShapeError("one seed per plan required");
    const std::size_t n = model_.size();
    const std::size_t dx = model_.state_dim();
    const std::size_t horizon = plans.front().horizon;
    for (const auto& p : plans)
      if (p.horizon != horizon || p.action_dim != model_.action_dim())
        throw ShapeError("plans in a batch must share horizon and action dimension");
    if (x0.size() != dx) throw ShapeError("x0 dimension mismatch");

    const std::size_t per_step = dx + 1;
    const std::size_t per_particle = horizon * per_step;
    std::vector<double> noise;
    if (cfg_.noise_mode == NoiseMode::sampled) {
      noise.resize(count * n * per_particle);
      for (std::size_t c = 0; c < count; ++c) {
        Rng rng(seeds[c]);
        double* dst = noise.data() + c * n * per_particle;
        for (std::size_t k = 0; k < n * per_particle; ++k) dst[k] = standard_normal(rng);
      }
    }

    auto& counters = efe_counters();
    std::vector<BatchRollout> rolls;
    rolls.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      rolls.push_back(rollout_batch(
          model_, i, x0, plans, cfg_.noise_mode,
          [&](std::size_t c, std::size_t t) -> std::span<const double> {
            return {noise.data() + c * n * per_particle + i * per_particle + t * per_step, per_step};
          }));
    }
    counters.objective_calls += count;
    counters.rollouts += count * n;

    std::vector<double> extrinsic(count, 0.0);
    for (std::size_t c = 0; c < count; ++c) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < horizon; ++t) s += rolls[i].rewards[t](0, c);
        total += s;
      }
      extrinsic[c] = total / static_cast<double>(n);
      if (!std::isfinite(extrinsic[c])) throw NumericalError("non-finite extrinsic estimate");
    }

    std::vector<EfeEstimate> out(count);
    if (cfg_.intrinsic_weight == 0.0 && cfg_.skip_unweighted_intrinsic) {
      for (std::size_t c = 0; c < count; ++c) out[c] = make_estimate(0.0, extrinsic[c], 0.0, false);
      return out;
    }

    // log_lik[c](i, k) = ln p(traj_i^c | particle k)
    std::vector<Matrix> log_lik(count, Matrix(n, n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < count; ++c) log_lik[c](i, i) = rolls[i].log_prob[c];

    const std::size_t cols = (n - 1) * count;
    Matrix prev(dx, cols), x(dx, cols), actions(model_.action_dim(), cols), r(1, cols);
    Matrix input, mu_x, mu_r;
    std::vector<double> acc(cols);
    for (std::size_t k = 0; k < n; ++k) {
      const Particle& particle = model_.params.particles[k];
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t t = 0; t < horizon; ++t) {
        std::size_t col = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i == k) continue;
          for (std::size_t c = 0; c < count; ++c, ++col) {
            for (std::size_t j = 0; j < dx; ++j) {
              prev(j, col) = t == 0 ? x0[j] : rolls[i].states[t - 1](j, c);
              x(j, col) = rolls[i].states[t](j, c);
            }
            const auto a = plans[c].at(t);
            for (std::size_t j = 0; j < a.size(); ++j) actions(j, col) = a[j];
            r(0, col) = rolls[i].rewards[t](0, c);
          }
        }
        detail::predict_state(particle, model_.normalizer, prev, actions, input, mu_x);
        detail::predict_reward(particle, model_.normalizer, x, actions, input, mu_r);
        detail::add_step_log_density(model_.normalizer, model_.heads, x, mu_x, r, mu_r, acc);
      }
      std::size_t col = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i == k) continue;
        for (std::size_t c = 0; c < count; ++c, ++col) log_lik[c](i, k) = acc[col];
      }
    }
    counters.cross_evaluations += count * n * (n - 1);

    for (std::size_t c = 0; c < count; ++c)
      out[c] = make_estimate(info_gain_from_log_likelihoods(log_lik[c], cfg_), extrinsic[c],
                             cfg_.intrinsic_weight);
    return out;
  }

 private:
  const EnsembleModel& model_;
  EfeConfig cfg_;
};

}  // namespace aif
