#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aif/efe.hpp"
#include "aif/ensemble.hpp"
#include "aif/env/mountain_ridge.hpp"
#include "aif/env/tilted_table.hpp"
#include "aif/errors.hpp"
#include "aif/planner.hpp"

namespace aif::agent {

struct EnsembleSettings {
  std::size_t n = 5;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::tanh;
  double sigma_x = 0.1;
  double sigma_r = 0.1;
  double learning_rate = 1e-3;
  double rms_decay = 0.99;
};

struct CemSettings {
  std::size_t horizon = 12;
  std::size_t population = 256;
  std::size_t elites = 25;
  std::size_t iterations = 8;
  double init_std_fraction = 0.5;  // of the half range of each action dimension
  double min_std = 0.01;
  double momentum = 0.1;
  bool common_random_numbers = false;
  bool keep_best = true;
};

struct ExperimentConfig {
  std::string env = "tilted_pushing";
  std::optional<env::TableLayout> layout;  // tilted tasks only
  std::string layout_path;
  std::size_t episode_length = 0;  // 0 keeps the environment default
  EnsembleSettings ensemble;
  EfeConfig efe;
  CemSettings cem;
  std::size_t episodes = 100;
  std::size_t seed_episodes = 5;
  std::size_t train_epochs_per_episode = 1;
  std::size_t max_updates_per_episode = 0;  // 0: no cap
  std::size_t batch_size = 64;
  std::size_t eval_every = 10;
  std::size_t checkpoint_every = 10;
  double action_noise_std = 0.0;
  std::vector<std::uint64_t> seeds{0};
  std::size_t buffer_capacity = 0;  // 0: unbounded
  std::size_t visitation_bins = 40;
  bool stop_on_first_reward = false;
  bool log_wall_time = true;
  bool dump_eval_trajectories = false;

  void validate() const {
    auto positive = [](std::size_t v, const char* key) {
      if (v == 0) throw ConfigError(std::string(key) + " must be positive", key);
    };
    if (ensemble.n < 2) throw ConfigError("ensemble needs at least 2 particles", "n");
    positive(train_epochs_per_episode, "train_epochs_per_episode");
    positive(batch_size, "batch_size");
    positive(eval_every, "eval_every");
    positive(checkpoint_every, "checkpoint_every");
    positive(visitation_bins, "visitation_bins");
    positive(cem.horizon, "horizon");
    positive(cem.population, "population");
    positive(cem.iterations, "iterations");
    if (cem.elites == 0 || cem.elites > cem.population)
      throw ConfigError("elites must lie in [1, population]", "elites");
    if (seeds.empty()) throw ConfigError("at least one seed required", "seeds");
    if (!(action_noise_std >= 0.0)) throw ConfigError("action_noise_std must be >= 0", "action_noise_std");
    if (!(cem.init_std_fraction > 0.0)) throw ConfigError("init_std_fraction must be positive", "init_std_fraction");
    GaussianHeadConfig{ensemble.sigma_x, ensemble.sigma_r}.validate();
    efe.validate();
    if (!(ensemble.learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0", "learning_rate");
    if (!(ensemble.rms_decay >= 0.0 && ensemble.rms_decay < 1.0)) throw ConfigError("rms_decay must lie in [0, 1)", "rms_decay");
    if (ensemble.hidden.empty()) throw ConfigError("at least one hidden layer required", "hidden");
    for (auto h : ensemble.hidden) positive(h, "hidden");
    if (env != "mountain_ridge" && env != "tilted_pushing" && env != "tilted_pushing_maze" &&
        env != "tilted_pushing_small")
      throw ConfigError("unknown environment '" + env + "'", "env");
    if (layout && env == "mountain_ridge") throw ConfigError("layouts apply to tilted tasks only", "layout");
  }
};

inline std::unique_ptr<env::Environment> make_environment(const ExperimentConfig& cfg) {
  if (cfg.env == "mountain_ridge") {
    env::RidgeParams p;
    if (cfg.episode_length) p.episode_length = cfg.episode_length;
    return std::make_unique<env::MountainRidgeEnv>(p);
  }
  env::TableLayout layout;
  if (cfg.layout) layout = *cfg.layout;
  else if (cfg.env == "tilted_pushing_maze") layout = env::TableLayout::tilted_pushing_maze();
  else if (cfg.env == "tilted_pushing_small") layout = env::TableLayout::tilted_pushing_small();
  else layout = env::TableLayout::tilted_pushing();
  if (cfg.episode_length) layout.episode_length = cfg.episode_length;
  return std::make_unique<env::TiltedTableEnv>(layout);
}

inline CemConfig make_cem_config(const CemSettings& s, const ActionBounds& bounds) {
  CemConfig c = CemConfig::defaults(bounds);
  c.horizon = s.horizon;
  c.population = s.population;
  c.elites = s.elites;
  c.iterations = s.iterations;
  for (std::size_t j = 0; j < bounds.dim(); ++j)
    c.init_std[j] = s.init_std_fraction * (bounds.hi[j] - bounds.lo[j]) / 2.0;
  c.min_std = s.min_std;
  c.momentum = s.momentum;
  c.common_random_numbers = s.common_random_numbers;
  c.keep_best = s.keep_best;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// JSON.

namespace detail {

template <class T>
T get_value(const nlohmann::json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for '" + key + "'", key);
  }
}

inline void require_object(const nlohmann::json& j, const std::string& key) {
  if (!j.is_object()) throw ConfigError("'" + key + "' must be an object", key);
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["env"] = c.env;
  if (c.layout) j["layout"] = *c.layout;
  j["episode_length"] = c.episode_length;
  j["ensemble"] = {{"n", c.ensemble.n},
                   {"hidden", c.ensemble.hidden},
                   {"activation", to_string(c.ensemble.activation)},
                   {"sigma_x", c.ensemble.sigma_x},
                   {"sigma_r", c.ensemble.sigma_r},
                   {"learning_rate", c.ensemble.learning_rate},
                   {"rms_decay", c.ensemble.rms_decay}};
  j["efe"] = {{"inner_normalization", to_string(c.efe.inner_normalization)},
              {"intrinsic_weight", c.efe.intrinsic_weight},
              {"log_domain", c.efe.log_domain},
              {"noise_mode", c.efe.noise_mode == NoiseMode::sampled ? "sampled" : "mean"},
              {"skip_unweighted_intrinsic", c.efe.skip_unweighted_intrinsic}};
  j["cem"] = {{"horizon", c.cem.horizon},
              {"population", c.cem.population},
              {"elites", c.cem.elites},
              {"iterations", c.cem.iterations},
              {"init_std_fraction", c.cem.init_std_fraction},
              {"min_std", c.cem.min_std},
              {"momentum", c.cem.momentum},
              {"common_random_numbers", c.cem.common_random_numbers},
              {"keep_best", c.cem.keep_best}};
  j["episodes"] = c.episodes;
  j["seed_episodes"] = c.seed_episodes;
  j["train_epochs_per_episode"] = c.train_epochs_per_episode;
  j["max_updates_per_episode"] = c.max_updates_per_episode;
  j["batch_size"] = c.batch_size;
  j["eval_every"] = c.eval_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["action_noise_std"] = c.action_noise_std;
  j["seeds"] = c.seeds;
  j["buffer_capacity"] = c.buffer_capacity;
  j["visitation_bins"] = c.visitation_bins;
  j["stop_on_first_reward"] = c.stop_on_first_reward;
  j["log_wall_time"] = c.log_wall_time;
  j["dump_eval_trajectories"] = c.dump_eval_trajectories;
  return j;
}

/// Parses an experiment description. `base_dir` resolves a relative layout
/// path. Every unknown key or ill-typed value raises ConfigError naming it.
inline ExperimentConfig config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {}) {
  using detail::get_value;
  detail::require_object(j, "config");
  ExperimentConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "env") c.env = get_value<std::string>(v, key);
    else if (key == "layout") {
      if (v.is_string()) {
        c.layout_path = v.get<std::string>();
        std::filesystem::path p(c.layout_path);
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        c.layout = env::load_layout(p.string());
      } else {
        c.layout = env::layout_from_json(v);
      }
    } else if (key == "episode_length") c.episode_length = get_value<std::size_t>(v, key);
    else if (key == "ensemble") {
      detail::require_object(v, key);
      for (const auto& [k, e] : v.items()) {
        if (k == "n") c.ensemble.n = get_value<std::size_t>(e, k);
        else if (k == "hidden") c.ensemble.hidden = get_value<std::vector<std::size_t>>(e, k);
        else if (k == "activation") c.ensemble.activation = activation_from_string(get_value<std::string>(e, k));
        else if (k == "sigma_x") c.ensemble.sigma_x = get_value<double>(e, k);
        else if (k == "sigma_r") c.ensemble.sigma_r = get_value<double>(e, k);
        else if (k == "learning_rate") c.ensemble.learning_rate = get_value<double>(e, k);
        else if (k == "rms_decay") c.ensemble.rms_decay = get_value<double>(e, k);
        else throw ConfigError("unknown key 'ensemble." + k + "'", k);
      }
    } else if (key == "efe") {
      detail::require_object(v, key);
      for (const auto& [k, e] : v.items()) {
        if (k == "inner_normalization")
          c.efe.inner_normalization = inner_normalization_from_string(get_value<std::string>(e, k));
        else if (k == "intrinsic_weight") c.efe.intrinsic_weight = get_value<double>(e, k);
        else if (k == "log_domain") c.efe.log_domain = get_value<bool>(e, k);
        else if (k == "noise_mode") {
          const auto m = get_value<std::string>(e, k);
          if (m == "sampled") c.efe.noise_mode = NoiseMode::sampled;
          else if (m == "mean") c.efe.noise_mode = NoiseMode::mean;
          else throw ConfigError("noise_mode must be 'sampled' or 'mean'", k);
        } else if (k == "skip_unweighted_intrinsic") c.efe.skip_unweighted_intrinsic = get_value<bool>(e, k);
        else throw ConfigError("unknown key 'efe." + k + "'", k);
      }
    } else if (key == "cem") {
      detail::require_object(v, key);
      for (const auto& [k, e] : v.items()) {
        if (k == "horizon") c.cem.horizon = get_value<std::size_t>(e, k);
        else if (k == "population") c.cem.population = get_value<std::size_t>(e, k);
        else if (k == "elites") c.cem.elites = get_value<std::size_t>(e, k);
        else if (k == "iterations") c.cem.iterations = get_value<std::size_t>(e, k);
        else if (k == "init_std_fraction") c.cem.init_std_fraction = get_value<double>(e, k);
        else if (k == "min_std") c.cem.min_std = get_value<double>(e, k);
        else if (k == "momentum") c.cem.momentum = get_value<double>(e, k);
        else if (k == "common_random_numbers") c.cem.common_random_numbers = get_value<bool>(e, k);
        else if (k == "keep_best") c.cem.keep_best = get_value<bool>(e, k);
        else throw ConfigError("unknown key 'cem." + k + "'", k);
      }
    } else if (key == "episodes") c.episodes = get_value<std::size_t>(v, key);
    else if (key == "seed_episodes") c.seed_episodes = get_value<std::size_t>(v, key);
    else if (key == "train_epochs_per_episode") c.train_epochs_per_episode = get_value<std::size_t>(v, key);
    else if (key == "max_updates_per_episode") c.max_updates_per_episode = get_value<std::size_t>(v, key);
    else if (key == "batch_size") c.batch_size = get_value<std::size_t>(v, key);
    else if (key == "eval_every") c.eval_every = get_value<std::size_t>(v, key);
    else if (key == "checkpoint_every") c.checkpoint_every = get_value<std::size_t>(v, key);
    else if (key == "action_noise_std") c.action_noise_std = get_value<double>(v, key);
    else if (key == "seeds") c.seeds = get_value<std::vector<std::uint64_t>>(v, key);
    else if (key == "buffer_capacity") c.buffer_capacity = get_value<std::size_t>(v, key);
    else if (key == "visitation_bins") c.visitation_bins = get_value<std::size_t>(v, key);
    else if (key == "stop_on_first_reward") c.stop_on_first_reward = get_value<bool>(v, key);
    else if (key == "log_wall_time") c.log_wall_time = get_value<bool>(v, key);
    else if (key == "dump_eval_trajectories") c.dump_eval_trajectories = get_value<bool>(v, key);
    else throw ConfigError("unknown key '" + key + "'", key);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path, "config");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what(), "config");
  }
  return config_from_json(j, std::filesystem::path(path).parent_path());
}

}  // namespace aif::agent
