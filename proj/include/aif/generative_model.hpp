#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "aif/ensemble.hpp"
#include "aif/errors.hpp"
#include "aif/gaussian.hpp"
#include "aif/mlp.hpp"
#include "aif/random.hpp"

namespace aif {

struct ActionBounds {
  std::vector<double> lo;
  std::vector<double> hi;

  static ActionBounds symmetric(std::size_t dim, double limit) {
    return {std::vector<double>(dim, -limit), std::vector<double>(dim, limit)};
  }

  std::size_t dim() const { return lo.size(); }
  double midpoint(std::size_t j) const { return 0.5 * (lo[j] + hi[j]); }
  double clip(std::size_t j, double v) const { return std::min(hi[j], std::max(lo[j], v)); }

  bool contains(std::span<const double> a) const {
    if (a.size() != dim()) return false;
    for (std::size_t j = 0; j < a.size(); ++j)
      if (!(a[j] >= lo[j] && a[j] <= hi[j])) return false;
    return true;
  }

  void validate() const {
    if (lo.empty() || lo.size() != hi.size()) throw ConfigError("malformed action bounds", "action_bounds");
    for (std::size_t j = 0; j < lo.size(); ++j)
      if (!(lo[j] < hi[j])) throw ConfigError("action bound lo >= hi", "action_bounds");
  }
  bool operator==(const ActionBounds&) const = default;
};

/// Open-loop action sequence, horizon x action_dim, row-major.
struct ActionPlan {
  std::size_t horizon = 0;
  std::size_t action_dim = 0;
  std::vector<double> values;

  static ActionPlan zeros(std::size_t horizon, std::size_t action_dim) {
    return {horizon, action_dim, std::vector<double>(horizon * action_dim, 0.0)};
  }

  std::span<double> at(std::size_t t) { return {values.data() + t * action_dim, action_dim}; }
  std::span<const double> at(std::size_t t) const { return {values.data() + t * action_dim, action_dim}; }

  void validate(const ActionBounds& bounds) const {
    if (horizon == 0) throw ShapeError("plan horizon must be at least 1");
    if (values.size() != horizon * action_dim) throw ShapeError("plan storage mismatch");
    if (bounds.dim() != action_dim) throw ShapeError("plan and bounds differ in action dimension");
    for (std::size_t t = 0; t < horizon; ++t)
      if (!bounds.contains(at(t))) throw ConfigError("plan leaves action bounds", "plan");
  }
  bool operator==(const ActionPlan&) const = default;
};

enum class NoiseMode { mean, sampled };

/// Imagined trajectory x_1..x_H, r_1..r_H of one particle.
struct TrajectorySample {
  std::size_t particle_index = 0;
  std::vector<std::vector<double>> states;
  std::vector<double> rewards;
  /// Standard normal draws per step: state_dim for the state, then one for
  /// the reward. Empty in mean mode.
  std::vector<std::vector<double>> noise_draws;

  std::size_t horizon() const { return states.size(); }
  bool operator==(const TrajectorySample&) const = default;
};

/// Rollouts of one particle for a batch of plans. Each matrix has one column
/// per plan.
struct BatchRollout {
  std::vector<Matrix> states;   // H entries, state_dim x P
  std::vector<Matrix> rewards;  // H entries, 1 x P
  std::vector<double> log_prob;  // P, density of each path under the generating particle
};

namespace detail {

inline Matrix plan_step_actions(std::span<const ActionPlan> plans, std::size_t t) {
  const std::size_t da = plans.front().action_dim;
  Matrix a(da, plans.size());
  for (std::size_t c = 0; c < plans.size(); ++c) {
    const auto at = plans[c].at(t);
    for (std::size_t j = 0; j < da; ++j) a(j, c) = at[j];
  }
  return a;
}

// Predicted next-state means x + m_d + s_d * net(x, a) in `mean`, and the
// normalized network input in `input`.
inline void predict_state(const Particle& p, const Normalizer& norm, const Matrix& states,
                          const Matrix& actions, Matrix& input, Matrix& mean) {
  normalized_input(norm, states, actions, input);
  const Matrix out = forward_batch(p.dynamics, input);
  const std::size_t batch = states.cols;
  mean.rows = states.rows;
  mean.cols = batch;
  mean.data.resize(states.data.size());
  for (std::size_t j = 0; j < states.rows; ++j) {
    const double m = norm.delta.shift_of(j);
    const double s = norm.delta.scale_of(j);
    for (std::size_t b = 0; b < batch; ++b)
      mean(j, b) = states(j, b) + (m + s * out(j, b));
  }
}

inline void predict_reward(const Particle& p, const Normalizer& norm, const Matrix& states,
                           const Matrix& actions, Matrix& input, Matrix& mean) {
  normalized_input(norm, states, actions, input);
  mean = forward_batch(p.reward, input);
  const double m = norm.reward.shift_of(0);
  const double s = norm.reward.scale_of(0);
  for (double& v : mean.data) v = m + s * v;
}

// Per-column ln N(x; mu, (sigma_x s_d)^2) + ln N(r; mu_r, (sigma_r s_r)^2),
// evaluated on normalized residuals.
inline void add_step_log_density(const Normalizer& norm, const GaussianHeadConfig& heads,
                                 const Matrix& x, const Matrix& mu_x, const Matrix& r,
                                 const Matrix& mu_r, std::span<double> acc) {
  const std::size_t batch = x.cols;
  std::vector<double> sq(batch, 0.0);
  for (std::size_t j = 0; j < x.rows; ++j) {
    const double s = norm.delta.scale_of(j);
    for (std::size_t b = 0; b < batch; ++b) {
      const double z = (x(j, b) - mu_x(j, b)) / s;
      sq[b] += z * z;
    }
  }
  const double sr = norm.reward.scale_of(0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double zr = (r(0, b) - mu_r(0, b)) / sr;
    acc[b] += gaussian_log_density(sq[b], x.rows, heads.sigma_x) +
              gaussian_log_density(zr * zr, 1, heads.sigma_r);
  }
}

inline void check_finite_step(const Matrix& x, const Matrix& r, std::size_t step) {
  for (double v : x.data)
    if (!std::isfinite(v)) throw RolloutDivergence("non-finite state at step " + std::to_string(step), step);
  for (double v : r.data)
    if (!std::isfinite(v)) throw RolloutDivergence("non-finite reward at step " + std::to_string(step), step);
}

}  // namespace detail

/// Ancestral sampling of one particle over a batch of plans sharing x0.
/// `noise(c, t)` must return the state_dim + 1 standard normal draws for plan
/// c at step t; it is not called in mean mode.
template <class NoiseFn>
BatchRollout rollout_batch(const EnsembleModel& model, std::size_t particle,
                           std::span<const double> x0, std::span<const ActionPlan> plans,
                           NoiseMode mode, NoiseFn&& noise) {
  const Particle& p = model.params.particles.at(particle);
  const std::size_t dx = model.state_dim();
  const std::size_t count = plans.size();
  const std::size_t horizon = plans.front().horizon;
  if (x0.size() != dx) throw ShapeError("x0 dimension mismatch");
  const double sx = model.heads.sigma_x;
  const double sr = model.heads.sigma_r;

  BatchRollout out;
  out.log_prob.assign(count, 0.0);
  Matrix prev(dx, count);
  for (std::size_t j = 0; j < dx; ++j)
    for (std::size_t c = 0; c < count; ++c) prev(j, c) = x0[j];

  Matrix input, mu_x, mu_r;
  for (std::size_t t = 0; t < horizon; ++t) {
    const Matrix actions = detail::plan_step_actions(plans, t);
    detail::predict_state(p, model.normalizer, prev, actions, input, mu_x);
    Matrix x = mu_x;
    if (mode == NoiseMode::sampled) {
      for (std::size_t c = 0; c < count; ++c) {
        const std::span<const double> eps = noise(c, t);
        for (std::size_t j = 0; j < dx; ++j)
          x(j, c) = mu_x(j, c) + sx * model.normalizer.delta.scale_of(j) * eps[j];
      }
    }
    detail::predict_reward(p, model.normalizer, x, actions, input, mu_r);
    Matrix r = mu_r;
    if (mode == NoiseMode::sampled) {
      for (std::size_t c = 0; c < count; ++c) {
        const std::span<const double> eps = noise(c, t);
        r(0, c) = mu_r(0, c) + sr * model.normalizer.reward.scale_of(0) * eps[dx];
      }
    }
    detail::check_finite_step(x, r, t);
    if (sx > 0.0 && sr > 0.0)
      detail::add_step_log_density(model.normalizer, model.heads, x, mu_x, r, mu_r, out.log_prob);
    out.states.push_back(x);
    out.rewards.push_back(std::move(r));
    prev = std::move(x);
  }
  return out;
}

/// Imagined trajectory of one particle under `plan`, starting from the
/// observed state x0. In sampled mode each step consumes state_dim + 1
/// standard normal draws from `rng` (state components first).
inline TrajectorySample rollout(const EnsembleModel& model, std::size_t particle,
                                std::span<const double> x0, const ActionPlan& plan, NoiseMode mode,
                                Rng& rng) {
  if (plan.horizon == 0) throw ShapeError("plan horizon must be at least 1");
  if (plan.action_dim != model.action_dim()) throw ShapeError("plan action dimension mismatch");
  const std::size_t dx = model.state_dim();
  TrajectorySample traj;
  traj.particle_index = particle;
  if (mode == NoiseMode::sampled) {
    traj.noise_draws.resize(plan.horizon);
    for (auto& step : traj.noise_draws) {
      step.resize(dx + 1);
      for (double& e : step) e = standard_normal(rng);
    }
  }
  const ActionPlan plans[1] = {plan};
  const auto batch = rollout_batch(model, particle, x0, plans, mode,
                                   [&](std::size_t, std::size_t t) -> std::span<const double> {
                                     return traj.noise_draws[t];
                                   });
  for (std::size_t t = 0; t < plan.horizon; ++t) {
    traj.states.push_back(batch.states[t].data);
    traj.rewards.push_back(batch.rewards[t](0, 0));
  }
  return traj;
}

/// ln p(x_1..H, r_1..H | particle, x0, plan): sum over steps of the dynamics
/// and reward Gaussian log densities. Densities are taken with respect to the
/// normalized coordinates, which shifts every particle by the same constant.
inline double traj_log_prob(const EnsembleModel& model, std::size_t particle,
                            std::span<const double> x0, const ActionPlan& plan,
                            const TrajectorySample& traj) {
  model.heads.validate();
  if (traj.states.size() != plan.horizon || traj.rewards.size() != plan.horizon)
    throw ShapeError("trajectory length does not match plan horizon");
  const std::size_t dx = model.state_dim();
  if (x0.size() != dx) throw ShapeError("x0 dimension mismatch");
  const Particle& p = model.params.particles.at(particle);
  Matrix prev(dx, 1);
  std::copy(x0.begin(), x0.end(), prev.data.begin());
  const ActionPlan plans[1] = {plan};
  double acc[1] = {0.0};
  Matrix input, mu_x, mu_r, x(dx, 1), r(1, 1);
  for (std::size_t t = 0; t < plan.horizon; ++t) {
    if (traj.states[t].size() != dx) throw ShapeError("trajectory state dimension mismatch");
    const Matrix actions = detail::plan_step_actions(plans, t);
    detail::predict_state(p, model.normalizer, prev, actions, input, mu_x);
    std::copy(traj.states[t].begin(), traj.states[t].end(), x.data.begin());
    r(0, 0) = traj.rewards[t];
    detail::predict_reward(p, model.normalizer, x, actions, input, mu_r);
    detail::add_step_log_density(model.normalizer, model.heads, x, mu_x, r, mu_r, acc);
    prev = x;
  }
  return acc[0];
}

}  // namespace aif
