#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "aif/env/environment.hpp"
#include "aif/errors.hpp"

namespace aif::env {

/// 1D car in a valley with height sin(3p). The engine is too weak to climb
/// the right hill directly; reaching it requires swinging back and forth.
/// Velocity decays by `damping` every physics step; one environment step
/// holds the action for `action_repeat` physics steps.
struct RidgeParams {
  double min_position = -1.2;
  double max_position = 0.6;
  double max_speed = 0.07;
  double goal_position = 0.5;
  double force = 0.0011;
  double gravity = 0.0025;
  double damping = 0.005;
  double start_jitter = 0.05;
  std::size_t action_repeat = 4;
  std::size_t episode_length = 50;

  static double valley_bottom() { return -std::numbers::pi / 6.0; }
};

struct RidgeState {
  double position = RidgeParams::valley_bottom();
  double velocity = 0.0;
  std::size_t step_count = 0;
  bool operator==(const RidgeState&) const = default;
};

inline RidgeState ridge_step(const RidgeState& s, double action, const RidgeParams& p) {
  const double a = std::clamp(action, -1.0, 1.0);
  RidgeState n = s;
  n.velocity = s.velocity * (1.0 - p.damping) + p.force * a - p.gravity * std::cos(3.0 * s.position);
  n.velocity = std::clamp(n.velocity, -p.max_speed, p.max_speed);
  n.position = s.position + n.velocity;
  if (n.position < p.min_position) {
    n.position = p.min_position;
    n.velocity = 0.0;
  } else if (n.position > p.max_position) {
    n.position = p.max_position;
    n.velocity = 0.0;
  }
  return n;
}

class MountainRidgeEnv final : public Environment {
 public:
  explicit MountainRidgeEnv(RidgeParams params = {}) : params_(params) {
    if (params_.episode_length == 0) throw ConfigError("episode_length must be positive", "episode_length");
    if (params_.action_repeat == 0) throw ConfigError("action_repeat must be positive", "action_repeat");
    spec_.name = "mountain_ridge";
    spec_.state_dim = 2;
    spec_.action_dim = 1;
    spec_.action_bounds = ActionBounds::symmetric(1, 1.0);
    spec_.episode_length = params_.episode_length;
    spec_.control_dt = static_cast<double>(params_.action_repeat);
    spec_.state_names = {"position", "velocity"};
  }

  const EnvSpec& spec() const override { return spec_; }
  const RidgeParams& params() const { return params_; }
  const RidgeState& state() const { return state_; }
  void set_state(const RidgeState& s) { state_ = s; }

  std::vector<double> reset(Rng& rng) override {
    state_ = RidgeState{};
    if (params_.start_jitter > 0.0)
      state_.position += uniform(rng, -params_.start_jitter, params_.start_jitter);
    return observation();
  }

  StepResult step(std::span<const double> action) override {
    if (action.size() != 1) throw ShapeError("mountain ridge takes a 1-dimensional action");
    bool reached = false;
    for (std::size_t k = 0; k < params_.action_repeat; ++k) {
      state_ = ridge_step(state_, action[0], params_);
      reached = reached || state_.position >= params_.goal_position;
    }
    ++state_.step_count;
    if (!std::isfinite(state_.position) || !std::isfinite(state_.velocity))
      throw SimulationError("non-finite mountain ridge state");
    return {observation(), reached ? 1.0 : 0.0, state_.step_count >= params_.episode_length};
  }

  std::vector<double> observation() const override { return {state_.position, state_.velocity}; }
  std::size_t steps_taken() const override { return state_.step_count; }
  std::array<double, 2> visit_point() const override { return {state_.position, state_.velocity}; }
  VisitExtent visit_extent() const override {
    return {params_.min_position, params_.max_position, -params_.max_speed, params_.max_speed};
  }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<MountainRidgeEnv>(*this); }

 private:
  RidgeParams params_;
  EnvSpec spec_;
  RidgeState state_;
};

}  // namespace aif::env
