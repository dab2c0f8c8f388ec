#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "aif/env/mountain_ridge.hpp"
#include "aif/env/tilted_table.hpp"
#include "aif/random.hpp"

namespace aif::checks {

struct FuzzReport {
  std::size_t steps = 0;
  std::size_t episodes = 0;
  std::size_t trapped_episodes = 0;
  std::size_t dropped_episodes = 0;
  std::size_t rewarded_steps = 0;
  std::uint64_t digest = 0xcbf29ce484222325ULL;
  std::vector<std::string> violations;

  void mix(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 64; b += 8) {
      digest ^= (bits >> b) & 0xff;
      digest *= 0x100000001b3ULL;
    }
  }
  void fail(std::size_t step, const std::string& what) {
    if (violations.size() < 20) violations.push_back("step " + std::to_string(step) + ": " + what);
  }
  bool ok() const { return violations.empty(); }
};

/// Random actions, a little outside the bounds so clipping is exercised.
inline std::vector<double> fuzz_action(Rng& rng, std::size_t dim) {
  std::vector<double> a(dim);
  for (double& v : a) v = uniform(rng, -1.2, 1.2);
  return a;
}

/// Half of the episodes hold each action for several steps, which moves the
/// ball further than white noise does.
inline FuzzReport fuzz_table(const env::TableLayout& layout, std::size_t steps, std::uint64_t seed) {
  using env::Vec2;
  FuzzReport rep;
  env::TiltedTableEnv e(layout);
  Rng rng(seed);
  const double hw = layout.half_width();
  const double eps = 1e-9;
  std::size_t k = 0;
  while (k < steps) {
    e.reset(rng);
    ++rep.episodes;
    const bool held = uniform(rng, 0.0, 1.0) < 0.5;
    std::vector<double> action = fuzz_action(rng, 3);
    bool trapped = false, dropped = false;
    bool done = false;
    while (!done && k < steps) {
      if (!held || uniform(rng, 0.0, 1.0) < 0.2) action = fuzz_action(rng, 3);
      const auto before = e.state();
      const auto r = e.step(action);
      const auto& s = e.state();
      done = r.done;
      ++k;
      for (double v : r.state) rep.mix(v);
      rep.mix(r.reward);

      if (trapped && !s.ball_trapped) rep.fail(k, "ball_trapped cleared");
      if (dropped && !s.ball_dropped) rep.fail(k, "ball_dropped cleared");
      if ((before.ball_trapped || before.ball_dropped) && (s.ball_pos != before.ball_pos || s.ball_vel != Vec2{}))
        rep.fail(k, "ball moved after trap or drop");
      trapped = s.ball_trapped;
      dropped = s.ball_dropped;
      if (r.reward != 0.0 && r.reward != 1.0) rep.fail(k, "reward outside {0, 1}");
      if (r.reward == 1.0) {
        ++rep.rewarded_steps;
        if (!layout.target_zone.contains(s.ball_pos) || s.ball_trapped || s.ball_dropped)
          rep.fail(k, "reward outside the target zone");
      }
      if (s.ball_trapped && r.reward != 0.0) rep.fail(k, "reward while trapped");
      if (s.gripper_pos.x < -hw - eps || s.gripper_pos.x > hw + eps || s.gripper_pos.y < -eps ||
          s.gripper_pos.y > layout.table_extent.y + eps)
        rep.fail(k, "gripper left the table");
      if (s.ball_pos.x < -hw - eps || s.ball_pos.x > hw + eps || s.ball_pos.y < -eps ||
          s.ball_pos.y > layout.table_extent.y + eps)
        rep.fail(k, "ball left the table");
      if (std::abs(s.finger_angle) > layout.finger_max_angle + eps) rep.fail(k, "finger angle out of range");
      if (r.done != (s.step_count >= layout.episode_length)) rep.fail(k, "done flag mismatch");
    }
    rep.trapped_episodes += trapped ? 1 : 0;
    rep.dropped_episodes += dropped ? 1 : 0;
  }
  rep.steps = k;
  return rep;
}

inline FuzzReport fuzz_ridge(const env::RidgeParams& params, std::size_t steps, std::uint64_t seed) {
  FuzzReport rep;
  env::MountainRidgeEnv e(params);
  Rng rng(seed);
  std::size_t k = 0;
  while (k < steps) {
    e.reset(rng);
    ++rep.episodes;
    bool done = false;
    while (!done && k < steps) {
      const auto a = fuzz_action(rng, 1);
      const auto r = e.step(a);
      done = r.done;
      ++k;
      for (double v : r.state) rep.mix(v);
      rep.mix(r.reward);
      if (r.reward != 0.0 && r.reward != 1.0) rep.fail(k, "reward outside {0, 1}");
      if (r.reward == 1.0) ++rep.rewarded_steps;
      if (r.state[0] < params.min_position || r.state[0] > params.max_position) rep.fail(k, "position out of range");
      if (std::abs(r.state[1]) > params.max_speed) rep.fail(k, "speed out of range");
      if (r.done != (e.steps_taken() >= params.episode_length)) rep.fail(k, "done flag mismatch");
    }
  }
  rep.steps = k;
  return rep;
}

/// Largest change of ball energy over one episode of frictionless,
/// contact-free rolling, relative to the largest kinetic energy reached.
inline double free_roll_energy_drift(std::size_t episode_length = 100) {
  env::TableLayout l;
  l.table_extent = {200.0, 400.0};
  l.target_zone = {-1.0, 399.0, 1.0, 400.0};
  l.friction = 0.0;
  l.episode_length = episode_length;
  env::TiltedTableState s;
  s.gripper_pos = {0.0, l.gripper_start_y};
  s.ball_pos = {-20.0, 360.0};
  s.ball_vel = {1.5, 2.0};
  const double e0 = env::ball_energy(s, l);
  double max_kinetic = 0.5 * s.ball_vel.dot(s.ball_vel);
  double max_change = 0.0;
  const std::vector<double> idle{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < episode_length; ++k) {
    s = env::step(s, idle, l, l.control_dt).state;
    max_kinetic = std::max(max_kinetic, 0.5 * s.ball_vel.dot(s.ball_vel));
    max_change = std::max(max_change, std::abs(env::ball_energy(s, l) - e0));
  }
  return max_change / max_kinetic;
}

inline std::string join(const std::vector<std::string>& lines) {
  std::ostringstream os;
  for (const auto& l : lines) os << l << '\n';
  return os.str();
}

}  // namespace aif::checks
