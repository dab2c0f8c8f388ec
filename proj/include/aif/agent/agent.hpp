#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aif/agent/config.hpp"
#include "aif/agent/logs.hpp"
#include "aif/efe.hpp"
#include "aif/ensemble.hpp"
#include "aif/env/environment.hpp"
#include "aif/errors.hpp"
#include "aif/planner.hpp"
#include "aif/random.hpp"
#include "aif/serialize.hpp"

namespace aif::agent {

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<Transition>& data() const { return data_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

  void push(Transition t) {
    for (const auto* v : {&t.x_prev, &t.action, &t.x_next})
      for (double x : *v)
        if (!std::isfinite(x)) throw NumericalError("non-finite value in transition");
    if (!std::isfinite(t.reward)) throw NumericalError("non-finite reward in transition");
    data_.push_back(std::move(t));
    if (capacity_ > 0 && data_.size() > capacity_) data_.erase(data_.begin());
  }

  void write(io::BinaryWriter& w) const {
    w.put_size(capacity_);
    w.put_size(data_.size());
    for (const auto& t : data_) {
      w.put_vector(t.x_prev);
      w.put_vector(t.action);
      w.put_vector(t.x_next);
      w.put<double>(t.reward);
    }
  }

  static ReplayBuffer read(io::BinaryReader& r) {
    ReplayBuffer b(r.get_size());
    const std::size_t n = r.get_size();
    b.data_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Transition t;
      t.x_prev = r.get_vector<double>();
      t.action = r.get_vector<double>();
      t.x_next = r.get_vector<double>();
      t.reward = r.get<double>();
      b.data_.push_back(std::move(t));
    }
    return b;
  }

  bool operator==(const ReplayBuffer&) const = default;

 private:
  std::size_t capacity_ = 0;
  std::vector<Transition> data_;
};

enum class EpisodeMode {
  explore,   // plan with the configured intrinsic weight, optional action noise
  evaluate,  // plan with intrinsic weight 0 and no noise
  random     // uniform random actions
};

struct EpisodeSettings {
  EfeConfig efe;
  CemConfig cem;
  double action_noise_std = 0.0;
};

struct EpisodeResult {
  EpisodeLog log;
  std::vector<Transition> transitions;  // explore and random modes only
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> actions;
  std::vector<double> rewards;
};

/// Replaces the planner when set (test hook for scripted policies).
using ActionOverride = std::function<std::vector<double>(std::span<const double> obs, std::size_t step)>;

/// Runs one episode from env.reset(rng). The model is only read. A planning
/// failure ends the episode early with `log.aborted` set.
inline EpisodeResult run_episode(env::Environment& env, const EnsembleModel& model,
                                 const EpisodeSettings& settings, EpisodeMode mode, Rng& rng,
                                 const ActionOverride& action_override = {}) {
  const auto& spec = env.spec();
  const auto& bounds = spec.action_bounds;
  EfeConfig efe = settings.efe;
  if (mode == EpisodeMode::evaluate) efe.intrinsic_weight = 0.0;
  const bool keep = mode != EpisodeMode::evaluate;

  EpisodeResult res;
  std::vector<double> obs = env.reset(rng);
  std::optional<PlanDistribution> dist;
  double intrinsic_sum = 0.0, extrinsic_sum = 0.0;
  std::size_t planned = 0;
  bool done = false;
  while (!done) {
    std::vector<double> action;
    if (action_override) {
      action = action_override(obs, env.steps_taken());
      for (std::size_t j = 0; j < action.size(); ++j) action[j] = bounds.clip(j, action[j]);
    } else if (mode == EpisodeMode::random) {
      action.resize(spec.action_dim);
      for (std::size_t j = 0; j < spec.action_dim; ++j) action[j] = uniform(rng, bounds.lo[j], bounds.hi[j]);
    } else {
      try {
        const EfeBatchEvaluator evaluator(model, efe);
        PlanResult pr = plan(evaluator, obs, dist, settings.cem, rng);
        action = pr.first_action;
        intrinsic_sum += pr.best_estimate.intrinsic;
        extrinsic_sum += pr.best_estimate.extrinsic;
        ++planned;
        dist = warm_start(pr.final, settings.cem);
      } catch (const Error& e) {
        res.log.aborted = true;
        res.log.error = e.what();
        break;
      }
      if (mode == EpisodeMode::explore && settings.action_noise_std > 0.0)
        for (std::size_t j = 0; j < action.size(); ++j)
          action[j] = bounds.clip(j, action[j] + settings.action_noise_std * standard_normal(rng));
    }
    const env::StepResult step = env.step(action);
    res.log.cumulative_reward += step.reward;
    res.log.ball_visitation.push_back(env.visit_point());
    res.states.push_back(obs);
    res.actions.push_back(action);
    res.rewards.push_back(step.reward);
    if (keep) res.transitions.push_back(Transition{obs, action, step.state, step.reward});
    obs = step.state;
    done = step.done;
  }
  if (planned > 0) {
    res.log.intrinsic_mean = intrinsic_sum / static_cast<double>(planned);
    res.log.extrinsic_mean = extrinsic_sum / static_cast<double>(planned);
  }
  return res;
}

namespace stream {
inline constexpr std::uint64_t model_init = 100;
inline constexpr std::uint64_t explore = 101;
inline constexpr std::uint64_t evaluate = 102;
inline constexpr std::uint64_t train = 103;
}  // namespace stream

inline constexpr char kCheckpointMagic[] = "AIFCKP01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Training loop state for one seed: model, optimizer, replay buffer, rng
/// streams and accumulated logs. Everything needed to continue a run
/// bit-for-bit is serialized by save().
class Agent {
 public:
  Agent(ExperimentConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        seed_(seed),
        env_(make_environment(cfg_)),
        buffer_(cfg_.buffer_capacity),
        explore_rng_(derive_seed(seed, stream::explore)),
        eval_rng_(derive_seed(seed, stream::evaluate)),
        train_rng_(derive_seed(seed, stream::train)) {
    cfg_.validate();
    const auto& spec = env_->spec();
    EnsembleArch arch{spec.state_dim, spec.action_dim, cfg_.ensemble.hidden, cfg_.ensemble.activation};
    model_ = EnsembleModel::create(arch, cfg_.ensemble.n, derive_seed(seed, stream::model_init),
                                   {cfg_.ensemble.sigma_x, cfg_.ensemble.sigma_r});
    optimizer_ = RmsPropState::for_ensemble(model_.params);
    visitation_ = VisitationGrid(cfg_.visitation_bins, env_->visit_extent());
    settings_.efe = cfg_.efe;
    settings_.cem = make_cem_config(cfg_.cem, spec.action_bounds);
    settings_.action_noise_std = cfg_.action_noise_std;
  }

  const ExperimentConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t episodes_done() const { return episodes_done_; }
  const EnsembleModel& model() const { return model_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const VisitationGrid& visitation() const { return visitation_; }
  const std::vector<EpisodeLog>& explore_logs() const { return explore_logs_; }
  const std::vector<EpisodeLog>& eval_logs() const { return eval_logs_; }
  std::optional<std::size_t> first_reward_episode() const { return first_reward_; }
  const env::Environment& environment() const { return *env_; }
  const EpisodeSettings& settings() const { return settings_; }

  bool finished() const {
    return episodes_done_ >= cfg_.episodes || (cfg_.stop_on_first_reward && first_reward_);
  }

  /// One explore episode (random actions during the seed phase), then
  /// ensemble training. Returns the episode log.
  EpisodeLog run_explore_episode() {
    const auto t0 = std::chrono::steady_clock::now();
    const EpisodeMode mode = episodes_done_ < cfg_.seed_episodes ? EpisodeMode::random : EpisodeMode::explore;
    EpisodeResult res = run_episode(*env_, model_, settings_, mode, explore_rng_);
    ++episodes_done_;
    res.log.episode = episodes_done_;
    for (const auto& p : res.log.ball_visitation) visitation_.add(p);
    for (auto& t : res.transitions) {
      model_.normalizer.observe(t.x_prev, t.action, t.x_next, t.reward);
      buffer_.push(std::move(t));
    }
    if (res.log.cumulative_reward > 0.0 && !first_reward_) first_reward_ = episodes_done_;
    try {
      train();
    } catch (const TrainingDivergence& e) {
      res.log.aborted = true;
      res.log.error = e.what();
      res.log.wall_time = elapsed(t0);
      explore_logs_.push_back(res.log);
      throw;
    }
    res.log.wall_time = elapsed(t0);
    explore_logs_.push_back(res.log);
    return res.log;
  }

  /// Evaluation episode: intrinsic weight 0, no noise, no mutation of the
  /// model or buffer.
  EpisodeResult run_eval_episode() {
    const auto t0 = std::chrono::steady_clock::now();
    auto env = env_->clone();
    EpisodeResult res = run_episode(*env, model_, settings_, EpisodeMode::evaluate, eval_rng_);
    res.log.episode = episodes_done_;
    res.log.wall_time = elapsed(t0);
    eval_logs_.push_back(res.log);
    return res;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    io::put_tag(os, kCheckpointMagic);
    io::BinaryWriter w(os);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put_string(to_json(cfg_).dump());
    w.put<std::uint64_t>(seed_);
    w.put_size(episodes_done_);
    w.put<std::int64_t>(first_reward_ ? static_cast<std::int64_t>(*first_reward_) : -1);
    write_ensemble(w, model_);
    write_optimizer(w, optimizer_);
    buffer_.write(w);
    w.put_string(rng_state(explore_rng_));
    w.put_string(rng_state(eval_rng_));
    w.put_string(rng_state(train_rng_));
    visitation_.write(w);
    for (const auto* logs : {&explore_logs_, &eval_logs_}) {
      w.put_size(logs->size());
      for (const auto& l : *logs) {
        w.put_size(l.episode);
        w.put<double>(l.cumulative_reward);
        w.put<double>(l.intrinsic_mean);
        w.put<double>(l.extrinsic_mean);
        w.put<double>(l.wall_time);
        w.put<std::uint8_t>(l.aborted ? 1 : 0);
        w.put_string(l.error);
      }
    }
    w.check();
  }

  static Agent load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path);
    io::BinaryReader r(is);
    r.expect_tag(kCheckpointMagic);
    if (r.get<std::uint32_t>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    ExperimentConfig cfg = config_from_json(nlohmann::json::parse(r.get_string()));
    const auto seed = r.get<std::uint64_t>();
    Agent a(cfg, seed);
    a.episodes_done_ = r.get_size();
    const auto first = r.get<std::int64_t>();
    if (first >= 0) a.first_reward_ = static_cast<std::size_t>(first);
    a.model_ = read_ensemble(r);
    a.optimizer_ = read_optimizer(r);
    a.buffer_ = ReplayBuffer::read(r);
    set_rng_state(a.explore_rng_, r.get_string());
    set_rng_state(a.eval_rng_, r.get_string());
    set_rng_state(a.train_rng_, r.get_string());
    a.visitation_ = VisitationGrid::read(r);
    for (auto* logs : {&a.explore_logs_, &a.eval_logs_}) {
      logs->resize(r.get_size());
      for (auto& l : *logs) {
        l.episode = r.get_size();
        l.cumulative_reward = r.get<double>();
        l.intrinsic_mean = r.get<double>();
        l.extrinsic_mean = r.get<double>();
        l.wall_time = r.get<double>();
        l.aborted = r.get<std::uint8_t>() != 0;
        l.error = r.get_string();
      }
    }
    return a;
  }

  /// Overrides the episode budget (used when resuming with a larger budget).
  void set_episodes(std::size_t episodes) { cfg_.episodes = episodes; }

 private:
  double elapsed(std::chrono::steady_clock::time_point t0) const {
    if (!cfg_.log_wall_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  // Each particle walks its own reshuffled passes over the buffer, so
  // particles differ through initialization and minibatch order.
  void train() {
    const std::size_t n_data = buffer_.size();
    if (n_data == 0) return;
    const std::size_t batch = std::min(cfg_.batch_size, n_data);
    const std::size_t per_epoch = (n_data + batch - 1) / batch;
    std::size_t updates = per_epoch * cfg_.train_epochs_per_episode;
    if (cfg_.max_updates_per_episode > 0) updates = std::min(updates, cfg_.max_updates_per_episode);
    const std::size_t n = model_.size();
    std::vector<std::vector<std::size_t>> order(n, std::vector<std::size_t>(n_data));
    auto shuffle = [&](std::vector<std::size_t>& v) {
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = k;
      for (std::size_t k = v.size(); k > 1; --k) {
        const auto j = static_cast<std::size_t>(train_rng_() % k);
        std::swap(v[k - 1], v[j]);
      }
    };
    for (auto& o : order) shuffle(o);
    std::vector<std::size_t> cursor(n, 0);
    std::vector<std::vector<std::size_t>> idx(n);
    const RmsPropConfig rms{cfg_.ensemble.learning_rate, cfg_.ensemble.rms_decay, 1e-8};
    for (std::size_t u = 0; u < updates; ++u) {
      for (std::size_t i = 0; i < n; ++i) {
        if (cursor[i] + batch > n_data) {
          shuffle(order[i]);
          cursor[i] = 0;
        }
        idx[i].assign(order[i].begin() + static_cast<std::ptrdiff_t>(cursor[i]),
                      order[i].begin() + static_cast<std::ptrdiff_t>(cursor[i] + batch));
        cursor[i] += batch;
      }
      train_step(model_, buffer_.data(), std::span<const std::vector<std::size_t>>(idx), optimizer_, rms);
    }
  }

  ExperimentConfig cfg_;
  std::uint64_t seed_;
  std::unique_ptr<env::Environment> env_;
  EnsembleModel model_;
  RmsPropState optimizer_;
  ReplayBuffer buffer_;
  Rng explore_rng_;
  Rng eval_rng_;
  Rng train_rng_;
  VisitationGrid visitation_;
  EpisodeSettings settings_;
  std::size_t episodes_done_ = 0;
  std::optional<std::size_t> first_reward_;
  std::vector<EpisodeLog> explore_logs_;
  std::vector<EpisodeLog> eval_logs_;
};

}  // namespace aif::agent
