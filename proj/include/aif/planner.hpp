#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "aif/efe.hpp"
#include "aif/errors.hpp"
#include "aif/generative_model.hpp"
#include "aif/random.hpp"

namespace aif {

struct CemConfig {
  std::size_t horizon = 12;
  std::size_t population = 256;
  std::size_t elites = 25;
  std::size_t iterations = 8;
  std::vector<double> init_std;  // per action dimension
  double min_std = 0.01;
  double momentum = 0.1;
  ActionBounds action_bounds;
  bool common_random_numbers = false;
  /// Re-insert the previous iteration's best plan into the population.
  bool keep_best = true;

  /// Defaults for the given bounds: init_std = 0.5 * (hi - lo) / 2.
  static CemConfig defaults(const ActionBounds& bounds) {
    CemConfig c;
    c.action_bounds = bounds;
    c.init_std.resize(bounds.dim());
    for (std::size_t j = 0; j < bounds.dim(); ++j)
      c.init_std[j] = 0.5 * (bounds.hi[j] - bounds.lo[j]) / 2.0;
    return c;
  }

  std::size_t action_dim() const { return action_bounds.dim(); }

  void validate() const {
    action_bounds.validate();
    if (horizon < 1) throw ConfigError("horizon must be >= 1", "horizon");
    if (iterations < 1) throw ConfigError("iterations must be >= 1", "iterations");
    if (elites < 1 || elites > population) throw ConfigError("need 1 <= elites <= population", "elites");
    if (!(min_std > 0.0)) throw ConfigError("min_std must be positive", "min_std");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)", "momentum");
    if (init_std.size() != action_dim()) throw ConfigError("init_std needs one entry per action dimension", "init_std");
    for (double s : init_std)
      if (!(s > 0.0)) throw ConfigError("init_std must be positive", "init_std");
  }
};

/// Independent Gaussian over an H x d_a action sequence.
struct PlanDistribution {
  std::size_t horizon = 0;
  std::size_t action_dim = 0;
  std::vector<double> mean;
  std::vector<double> std;

  static PlanDistribution initial(const CemConfig& cfg) {
    PlanDistribution d{cfg.horizon, cfg.action_dim(), {}, {}};
    d.mean.resize(cfg.horizon * cfg.action_dim());
    d.std.resize(cfg.horizon * cfg.action_dim());
    for (std::size_t t = 0; t < cfg.horizon; ++t)
      for (std::size_t j = 0; j < cfg.action_dim(); ++j) {
        d.mean[t * cfg.action_dim() + j] = cfg.action_bounds.midpoint(j);
        d.std[t * cfg.action_dim() + j] = cfg.init_std[j];
      }
    return d;
  }

  ActionPlan mean_plan() const { return {horizon, action_dim, mean}; }
  bool operator==(const PlanDistribution&) const = default;
};

/// Receding-horizon shift: drop the executed step, append the action-space
/// midpoint, reset the spread to init_std.
inline PlanDistribution warm_start(const PlanDistribution& prev, const CemConfig& cfg) {
  PlanDistribution d = prev;
  const std::size_t da = prev.action_dim;
  if (prev.horizon > 0) {
    std::copy(prev.mean.begin() + static_cast<std::ptrdiff_t>(da), prev.mean.end(), d.mean.begin());
    for (std::size_t j = 0; j < da; ++j)
      d.mean[(prev.horizon - 1) * da + j] = cfg.action_bounds.midpoint(j);
  }
  for (std::size_t t = 0; t < prev.horizon; ++t)
    for (std::size_t j = 0; j < da; ++j) d.std[t * da + j] = cfg.init_std[j];
  return d;
}

struct IterationRecord {
  std::size_t iteration = 0;
  double elite_mean = 0.0;  // mean objective over the elites
  double elite_min = 0.0;   // best objective this iteration
  double elite_intrinsic = 0.0;
  double elite_extrinsic = 0.0;
  std::size_t finite_count = 0;
};

struct PlanResult {
  std::vector<double> first_action;
  PlanDistribution final;
  ActionPlan best_plan;
  EfeEstimate best_estimate;
  std::vector<IterationRecord> diagnostics;
};

namespace detail {

inline double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  double v = mean;
  for (int attempt = 0; attempt < 10; ++attempt) {
    v = mean + sd * standard_normal(rng);
    if (v >= lo && v <= hi) return v;
  }
  return std::min(hi, std::max(lo, v));
}

}  // namespace detail

/// Cross-entropy method minimizing `objective(x0, plans, seeds)`, which
/// returns one EfeEstimate (the `total` field is minimized) per plan.
/// Each candidate gets its own objective seed, or all candidates of an
/// iteration share one when common_random_numbers is set.
template <class Objective>
PlanResult plan(Objective&& objective, std::span<const double> x0,
                const std::optional<PlanDistribution>& prev, const CemConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t da = cfg.action_dim();
  const std::size_t h = cfg.horizon;
  PlanDistribution dist = prev ? *prev : PlanDistribution::initial(cfg);
  if (dist.horizon != h || dist.action_dim != da) throw ShapeError("plan distribution shape mismatch");

  PlanResult result;
  std::optional<ActionPlan> carried;
  std::vector<ActionPlan> population(cfg.population, ActionPlan::zeros(h, da));
  std::vector<std::uint64_t> seeds(cfg.population);
  std::vector<std::size_t> order(cfg.population);
  const double inf = std::numeric_limits<double>::infinity();

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t c = 0; c < cfg.population; ++c) {
      ActionPlan& p = population[c];
      for (std::size_t t = 0; t < h; ++t)
        for (std::size_t j = 0; j < da; ++j) {
          const std::size_t k = t * da + j;
          p.values[k] = detail::truncated_normal(rng, dist.mean[k], dist.std[k],
                                                 cfg.action_bounds.lo[j], cfg.action_bounds.hi[j]);
        }
    }
    if (cfg.keep_best && carried) population[0] = *carried;
    if (cfg.common_random_numbers) {
      std::fill(seeds.begin(), seeds.end(), rng());
    } else {
      for (auto& s : seeds) s = rng();
    }

    const std::vector<EfeEstimate> est = objective(x0, std::span<const ActionPlan>(population),
                                                   std::span<const std::uint64_t>(seeds));
    if (est.size() != cfg.population) throw ShapeError("objective returned wrong number of estimates");
    std::vector<double> score(cfg.population);
    std::size_t finite = 0;
    for (std::size_t c = 0; c < cfg.population; ++c) {
      score[c] = std::isfinite(est[c].total) ? est[c].total : inf;
      if (score[c] < inf) ++finite;
    }
    if (finite == 0) throw PlanningFailure("objective was non-finite for every candidate");

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    const std::size_t n_elite = std::min(cfg.elites, finite);

    IterationRecord rec;
    rec.iteration = it;
    rec.finite_count = finite;
    rec.elite_min = score[order[0]];
    for (std::size_t e = 0; e < n_elite; ++e) {
      rec.elite_mean += score[order[e]];
      rec.elite_intrinsic += est[order[e]].intrinsic;
      rec.elite_extrinsic += est[order[e]].extrinsic;
    }
    rec.elite_mean /= static_cast<double>(n_elite);
    rec.elite_intrinsic /= static_cast<double>(n_elite);
    rec.elite_extrinsic /= static_cast<double>(n_elite);
    result.diagnostics.push_back(rec);

    carried = population[order[0]];
    result.best_plan = population[order[0]];
    result.best_estimate = est[order[0]];

    for (std::size_t k = 0; k < h * da; ++k) {
      double m = 0.0;
      for (std::size_t e = 0; e < n_elite; ++e) m += population[order[e]].values[k];
      m /= static_cast<double>(n_elite);
      double v = 0.0;
      for (std::size_t e = 0; e < n_elite; ++e) {
        const double d = population[order[e]].values[k] - m;
        v += d * d;
      }
      const double sd = std::sqrt(v / static_cast<double>(n_elite));
      dist.mean[k] = cfg.momentum * dist.mean[k] + (1.0 - cfg.momentum) * m;
      dist.std[k] = std::max(cfg.min_std, cfg.momentum * dist.std[k] + (1.0 - cfg.momentum) * sd);
      const std::size_t j = k % da;
      dist.mean[k] = cfg.action_bounds.clip(j, dist.mean[k]);
    }
  }

  result.final = dist;
  result.first_action.assign(dist.mean.begin(), dist.mean.begin() + static_cast<std::ptrdiff_t>(da));
  return result;
}

}  // namespace aif
