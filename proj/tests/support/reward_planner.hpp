#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aif/efe.hpp"
#include "aif/generative_model.hpp"

namespace aif::checks {

/// Planning objective that only looks at imagined reward: the negated mean
/// over particles of the cumulative reward, each particle rolled out in turn
/// from Rng(seed) of its candidate.
struct RewardOnlyObjective {
  const EnsembleModel& model;
  NoiseMode noise_mode = NoiseMode::sampled;

  std::vector<EfeEstimate> operator()(std::span<const double> x0, std::span<const ActionPlan> plans,
                                      std::span<const std::uint64_t> seeds) const {
    std::vector<EfeEstimate> out;
    out.reserve(plans.size());
    for (std::size_t c = 0; c < plans.size(); ++c) {
      Rng rng(seeds[c]);
      double total = 0.0;
      for (std::size_t i = 0; i < model.size(); ++i) {
        const auto traj = rollout(model, i, x0, plans[c], noise_mode, rng);
        double sum = 0.0;
        for (double r : traj.rewards) sum += r;
        total += sum;
      }
      const double mean = total / static_cast<double>(model.size());
      EfeEstimate e;
      e.extrinsic = mean;
      e.total = -mean;
      e.intrinsic_evaluated = false;
      out.push_back(e);
    }
    return out;
  }
};

}  // namespace aif::checks
