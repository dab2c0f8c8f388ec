#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "aif/agent/agent.hpp"
#include "aif/agent/logs.hpp"
#include "aif/errors.hpp"

namespace aif::agent {

namespace fs = std::filesystem;

inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kEpisodeLogFile = "episodes.csv";
inline constexpr const char* kEvalLogFile = "eval.csv";
inline constexpr const char* kResolvedConfigFile = "config.resolved.json";

inline std::string numbered_file(const char* prefix, std::size_t episode, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_e%06zu.%s", prefix, episode, ext);
  return buf;
}

/// Progress callback: (kind, log) with kind "explore" or "eval".
using ProgressFn = std::function<void(const char* kind, const EpisodeLog&)>;

/// Writes every artifact derivable from the agent's state into `dir`: episode
/// logs, the current visitation grid and the checkpoint.
inline void write_run_state(const Agent& agent, const fs::path& dir) {
  write_episode_csv((dir / kEpisodeLogFile).string(), agent.explore_logs());
  write_episode_csv((dir / kEvalLogFile).string(), agent.eval_logs());
  agent.save((dir / kCheckpointFile).string());
}

/// Runs explore episodes until the agent's budget is spent. Logs are appended
/// as episodes finish; every eval_every episodes an evaluation episode runs and
/// the visitation grid is exported; every checkpoint_every episodes and at the
/// end a checkpoint is written. A training divergence checkpoints and rethrows.
inline void run_training(Agent& agent, const fs::path& dir, const ProgressFn& progress = {}) {
  fs::create_directories(dir);
  const ExperimentConfig& cfg = agent.config();
  {
    std::ofstream os(dir / kResolvedConfigFile);
    os << to_json(cfg).dump(2) << "\n";
  }
  // Rewriting from the agent's own logs makes a resumed run's files identical
  // to an uninterrupted one.
  write_episode_csv((dir / kEpisodeLogFile).string(), agent.explore_logs());
  write_episode_csv((dir / kEvalLogFile).string(), agent.eval_logs());

  while (!agent.finished()) {
    EpisodeLog log;
    try {
      log = agent.run_explore_episode();
    } catch (const TrainingDivergence&) {
      write_run_state(agent, dir);
      throw;
    }
    append_episode_csv((dir / kEpisodeLogFile).string(), log);
    if (progress) progress("explore", log);
    const std::size_t e = agent.episodes_done();
    if (e % cfg.eval_every == 0) {
      EpisodeResult res = agent.run_eval_episode();
      append_episode_csv((dir / kEvalLogFile).string(), res.log);
      agent.visitation().write_csv((dir / numbered_file("visitation", e, "csv")).string());
      if (cfg.dump_eval_trajectories) {
        const auto& spec = agent.environment().spec();
        write_trajectory_csv((dir / numbered_file("trajectory", e, "csv")).string(), spec.state_names,
                             spec.action_dim, res.states, res.actions, res.rewards);
      }
      if (progress) progress("eval", res.log);
    }
    if (e % cfg.checkpoint_every == 0) agent.save((dir / kCheckpointFile).string());
  }
  agent.visitation().write_csv((dir / "visitation.csv").string());
  agent.save((dir / kCheckpointFile).string());
}

}  // namespace aif::agent
