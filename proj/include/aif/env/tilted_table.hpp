#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aif/env/environment.hpp"
#include "aif/errors.hpp"
#include "aif/random.hpp"

namespace aif::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  bool operator==(const Vec2&) const = default;
};

struct Box {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
  bool contains(Vec2 p) const { return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max; }
  bool operator==(const Box&) const = default;
};

struct Hole {
  Vec2 center;
  double radius = 0.0;
  bool operator==(const Hole&) const = default;
};

/// Geometry and physical constants of a tilted table. The table spans
/// x in [-w/2, w/2], y in [0, l]; down-slope is -y.
struct TableLayout {
  static constexpr int kVersion = 1;

  std::string name = "tilted_pushing";
  Vec2 table_extent{1.0, 1.5};
  double tilt_accel = 1.0;  // m/s^2 along -y
  Box target_zone{-0.2, 1.25, 0.2, 1.5};
  std::vector<Hole> holes;
  double friction = 0.01;  // rolling resistance, decel = friction * 9.81
  double finger_length = 0.2;
  double ball_radius = 0.04;
  double gripper_max_speed = 0.5;
  double gripper_max_accel = 4.0;
  double finger_max_angvel = 2.0;
  double finger_max_angaccel = 16.0;
  double finger_max_angle = 1.5;
  double recovery_distance = 0.1;
  double drop_speed = 0.3;
  double gripper_start_y = 0.1;
  double start_jitter = 0.02;
  std::size_t episode_length = 100;
  double control_dt = 0.25;
  std::size_t substeps = 10;

  double half_width() const { return 0.5 * table_extent.x; }

  void validate() const {
    auto fail = [](const std::string& what, const std::string& key) { throw ConfigError(what, key); };
    if (!(table_extent.x > 0 && table_extent.y > 0)) fail("table extent must be positive", "table_extent");
    if (!(tilt_accel >= 0)) fail("tilt_accel must be >= 0", "tilt_accel");
    if (!(friction >= 0)) fail("friction must be >= 0", "friction");
    if (!(ball_radius > 0 && finger_length > 0)) fail("ball and finger sizes must be positive", "ball_radius");
    if (episode_length == 0) fail("episode_length must be positive", "episode_length");
    if (!(control_dt > 0) || substeps == 0) fail("control_dt and substeps must be positive", "control_dt");
    if (!(start_jitter >= 0 && start_jitter <= 0.5 * finger_length)) fail("start_jitter out of range", "start_jitter");
    const Box table{-half_width(), 0.0, half_width(), table_extent.y};
    if (!(table.contains({target_zone.x_min, target_zone.y_min}) &&
          table.contains({target_zone.x_max, target_zone.y_max}) && target_zone.x_min < target_zone.x_max &&
          target_zone.y_min < target_zone.y_max))
      fail("target zone must lie inside the table", "target_zone");
    for (const auto& h : holes)
      if (!(h.radius > 0 && table.contains(h.center))) fail("holes must lie inside the table", "holes");
  }

  static TableLayout tilted_pushing() { return {}; }

  /// Two staggered rows of holes: the ball has to pass the lower row on the
  /// right and the upper row on the left.
  static TableLayout tilted_pushing_maze() {
    TableLayout l;
    l.name = "tilted_pushing_maze";
    for (double x : {-0.4, -0.25, -0.1, 0.05}) l.holes.push_back({{x, 0.55}, 0.08});
    for (double x : {0.4, 0.25, 0.1, -0.05}) l.holes.push_back({{x, 1.0}, 0.08});
    return l;
  }

  /// Reduced table used for desk-scale experiments.
  static TableLayout tilted_pushing_small() {
    TableLayout l;
    l.name = "tilted_pushing_small";
    l.table_extent = {0.6, 0.9};
    l.target_zone = {-0.15, 0.75, 0.15, 0.9};
    return l;
  }

  bool operator==(const TableLayout&) const = default;
};

inline void to_json(nlohmann::json& j, const TableLayout& l) {
  nlohmann::json holes = nlohmann::json::array();
  for (const auto& h : l.holes) holes.push_back({{"x", h.center.x}, {"y", h.center.y}, {"radius", h.radius}});
  j = {{"version", TableLayout::kVersion},
       {"name", l.name},
       {"table_extent", {l.table_extent.x, l.table_extent.y}},
       {"tilt_accel", l.tilt_accel},
       {"target_zone", {{"x_min", l.target_zone.x_min}, {"y_min", l.target_zone.y_min},
                        {"x_max", l.target_zone.x_max}, {"y_max", l.target_zone.y_max}}},
       {"holes", holes},
       {"friction", l.friction},
       {"finger_length", l.finger_length},
       {"ball_radius", l.ball_radius},
       {"gripper_max_speed", l.gripper_max_speed},
       {"gripper_max_accel", l.gripper_max_accel},
       {"finger_max_angvel", l.finger_max_angvel},
       {"finger_max_angaccel", l.finger_max_angaccel},
       {"finger_max_angle", l.finger_max_angle},
       {"recovery_distance", l.recovery_distance},
       {"drop_speed", l.drop_speed},
       {"gripper_start_y", l.gripper_start_y},
       {"start_jitter", l.start_jitter},
       {"episode_length", l.episode_length},
       {"control_dt", l.control_dt},
       {"substeps", l.substeps}};
}

/// Reads a layout, starting from the built-in defaults. Unknown keys and
/// type mismatches raise ConfigError naming the key.
inline TableLayout layout_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("layout must be a JSON object", "layout");
  TableLayout l;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "version") {
        if (value.get<int>() != TableLayout::kVersion) throw ConfigError("unsupported layout version", key);
      } else if (key == "name") l.name = value.get<std::string>();
      else if (key == "table_extent") l.table_extent = {value.at(0).get<double>(), value.at(1).get<double>()};
      else if (key == "tilt_accel") l.tilt_accel = value.get<double>();
      else if (key == "target_zone")
        l.target_zone = {value.at("x_min").get<double>(), value.at("y_min").get<double>(),
                         value.at("x_max").get<double>(), value.at("y_max").get<double>()};
      else if (key == "holes") {
        l.holes.clear();
        for (const auto& h : value)
          l.holes.push_back({{h.at("x").get<double>(), h.at("y").get<double>()}, h.at("radius").get<double>()});
      } else if (key == "friction") l.friction = value.get<double>();
      else if (key == "finger_length") l.finger_length = value.get<double>();
      else if (key == "ball_radius") l.ball_radius = value.get<double>();
      else if (key == "gripper_max_speed") l.gripper_max_speed = value.get<double>();
      else if (key == "gripper_max_accel") l.gripper_max_accel = value.get<double>();
      else if (key == "finger_max_angvel") l.finger_max_angvel = value.get<double>();
      else if (key == "finger_max_angaccel") l.finger_max_angaccel = value.get<double>();
      else if (key == "finger_max_angle") l.finger_max_angle = value.get<double>();
      else if (key == "recovery_distance") l.recovery_distance = value.get<double>();
      else if (key == "drop_speed") l.drop_speed = value.get<double>();
      else if (key == "gripper_start_y") l.gripper_start_y = value.get<double>();
      else if (key == "start_jitter") l.start_jitter = value.get<double>();
      else if (key == "episode_length") l.episode_length = value.get<std::size_t>();
      else if (key == "control_dt") l.control_dt = value.get<double>();
      else if (key == "substeps") l.substeps = value.get<std::size_t>();
      else throw ConfigError("unknown layout key '" + key + "'", key);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for layout key '" + key + "': " + e.what(), key);
    }
  }
  l.validate();
  return l;
}

inline TableLayout load_layout(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open layout file " + path, "layout");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("layout file " + path + " is not valid JSON: " + e.what(), "layout");
  }
  return layout_from_json(j);
}

struct TiltedTableState {
  Vec2 gripper_pos;
  Vec2 gripper_vel;
  double finger_angle = 0.0;
  double finger_angvel = 0.0;
  Vec2 ball_pos;
  Vec2 ball_vel;
  bool ball_trapped = false;
  bool ball_dropped = false;
  std::size_t step_count = 0;
  /// Sub-step index (since reset) at which the ball fell into a hole, or -1.
  std::int64_t trapped_at_substep = -1;

  std::vector<double> observation() const {
    return {gripper_pos.x, gripper_pos.y, gripper_vel.x, gripper_vel.y, finger_angle,
            finger_angvel, ball_pos.x,    ball_pos.y,    ball_vel.x,    ball_vel.y};
  }
  bool operator==(const TiltedTableState&) const = default;
};

/// Finger endpoints for the given gripper pose.
inline std::array<Vec2, 2> finger_segment(const TiltedTableState& s, const TableLayout& l) {
  const Vec2 half{0.5 * l.finger_length * std::cos(s.finger_angle),
                  0.5 * l.finger_length * std::sin(s.finger_angle)};
  return {s.gripper_pos - half, s.gripper_pos + half};
}

inline Vec2 closest_point_on_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return a + ab * t;
}

/// Distance from the ball center to the finger segment.
inline double finger_distance(const TiltedTableState& s, const TableLayout& l) {
  const auto seg = finger_segment(s, l);
  return (s.ball_pos - closest_point_on_segment(s.ball_pos, seg[0], seg[1])).norm();
}

/// Kinetic plus down-slope potential energy of the ball per unit mass.
inline double ball_energy(const TiltedTableState& s, const TableLayout& l) {
  return 0.5 * s.ball_vel.dot(s.ball_vel) + l.tilt_accel * s.ball_pos.y;
}

/// Ball resting on a horizontal finger at the bottom center of the table,
/// shifted along the finger by up to start_jitter.
inline TiltedTableState reset(const TableLayout& layout, Rng& rng) {
  TiltedTableState s;
  s.gripper_pos = {0.0, layout.gripper_start_y};
  const double jitter = layout.start_jitter > 0.0 ? uniform(rng, -layout.start_jitter, layout.start_jitter) : 0.0;
  s.ball_pos = {jitter, layout.gripper_start_y + layout.ball_radius};
  return s;
}

struct TableStep {
  TiltedTableState state;
  double reward = 0.0;
  bool done = false;
};

namespace detail {

inline double approach(double current, double target, double max_delta) {
  return current + std::clamp(target - current, -max_delta, max_delta);
}

inline void move_gripper(TiltedTableState& s, const TableLayout& l, std::span<const double> cmd, double h) {
  const double vx_cmd = std::clamp(cmd[0], -1.0, 1.0) * l.gripper_max_speed;
  const double vy_cmd = std::clamp(cmd[1], -1.0, 1.0) * l.gripper_max_speed;
  const double w_cmd = std::clamp(cmd[2], -1.0, 1.0) * l.finger_max_angvel;
  s.gripper_vel.x = approach(s.gripper_vel.x, vx_cmd, l.gripper_max_accel * h);
  s.gripper_vel.y = approach(s.gripper_vel.y, vy_cmd, l.gripper_max_accel * h);
  s.finger_angvel = approach(s.finger_angvel, w_cmd, l.finger_max_angaccel * h);

  s.gripper_pos = s.gripper_pos + s.gripper_vel * h;
  const double hw = l.half_width();
  if (s.gripper_pos.x < -hw || s.gripper_pos.x > hw) {
    s.gripper_pos.x = std::clamp(s.gripper_pos.x, -hw, hw);
    s.gripper_vel.x = 0.0;
  }
  if (s.gripper_pos.y < 0.0 || s.gripper_pos.y > l.table_extent.y) {
    s.gripper_pos.y = std::clamp(s.gripper_pos.y, 0.0, l.table_extent.y);
    s.gripper_vel.y = 0.0;
  }
  s.finger_angle += s.finger_angvel * h;
  if (std::abs(s.finger_angle) > l.finger_max_angle) {
    s.finger_angle = std::clamp(s.finger_angle, -l.finger_max_angle, l.finger_max_angle);
    s.finger_angvel = 0.0;
  }
}

inline void move_ball(TiltedTableState& s, const TableLayout& l, double h) {
  const Vec2 v0 = s.ball_vel;
  Vec2 v1 = v0 + Vec2{0.0, -l.tilt_accel * h};
  const double speed = v1.norm();
  const double decel = l.friction * 9.81 * h;
  if (speed > 0.0) v1 = v1 * (std::max(0.0, speed - decel) / speed);
  // Position from the average velocity: exact under constant acceleration.
  s.ball_pos = s.ball_pos + (v0 + v1) * (0.5 * h);
  s.ball_vel = v1;
}

inline void resolve_finger_contact(TiltedTableState& s, const TableLayout& l) {
  const auto seg = finger_segment(s, l);
  const Vec2 c = closest_point_on_segment(s.ball_pos, seg[0], seg[1]);
  const Vec2 d = s.ball_pos - c;
  const double dist = d.norm();
  if (dist >= l.ball_radius) return;
  Vec2 n;
  if (dist > 1e-12) {
    n = d * (1.0 / dist);
  } else {
    n = {-std::sin(s.finger_angle), std::cos(s.finger_angle)};
  }
  s.ball_pos = c + n * l.ball_radius;
  const Vec2 arm = c - s.gripper_pos;
  const Vec2 contact_vel = s.gripper_vel + Vec2{-s.finger_angvel * arm.y, s.finger_angvel * arm.x};
  const double rel = (s.ball_vel - contact_vel).dot(n);
  if (rel < 0.0) s.ball_vel = s.ball_vel - n * rel;
}

inline void resolve_walls(TiltedTableState& s, const TableLayout& l) {
  const double r = l.ball_radius;
  const double hw = l.half_width();
  if (s.ball_pos.x < -hw + r) {
    s.ball_pos.x = -hw + r;
    s.ball_vel.x = std::max(0.0, s.ball_vel.x);
  } else if (s.ball_pos.x > hw - r) {
    s.ball_pos.x = hw - r;
    s.ball_vel.x = std::min(0.0, s.ball_vel.x);
  }
  if (s.ball_pos.y < r) {
    s.ball_pos.y = r;
    s.ball_vel.y = std::max(0.0, s.ball_vel.y);
  } else if (s.ball_pos.y > l.table_extent.y - r) {
    s.ball_pos.y = l.table_extent.y - r;
    s.ball_vel.y = std::min(0.0, s.ball_vel.y);
  }
}

inline bool ball_lost(const TiltedTableState& s, const TableLayout& l) {
  const auto seg = finger_segment(s, l);
  const double finger_low = std::min(seg[0].y, seg[1].y);
  if (s.ball_pos.y >= finger_low - l.recovery_distance) return false;
  const bool at_bottom = s.ball_pos.y <= l.ball_radius + 1e-12;
  return s.ball_vel.y < -l.drop_speed || at_bottom;
}

}  // namespace detail

/// Advances one control step of `dt` seconds in layout.substeps sub-steps.
inline TableStep step(const TiltedTableState& state, std::span<const double> action,
                      const TableLayout& layout, double dt) {
  if (action.size() != 3) throw ShapeError("tilted table takes a 3-dimensional action");
  TiltedTableState s = state;
  const double h = dt / static_cast<double>(layout.substeps);
  for (std::size_t k = 0; k < layout.substeps; ++k) {
    detail::move_gripper(s, layout, action, h);
    if (s.ball_trapped || s.ball_dropped) continue;
    detail::move_ball(s, layout, h);
    detail::resolve_finger_contact(s, layout);
    detail::resolve_walls(s, layout);
    for (const auto& hole : layout.holes) {
      if ((s.ball_pos - hole.center).norm() < hole.radius) {
        s.ball_trapped = true;
        s.trapped_at_substep = static_cast<std::int64_t>(s.step_count * layout.substeps + k);
        s.ball_vel = {};
        break;
      }
    }
    if (!s.ball_trapped && detail::ball_lost(s, layout)) {
      s.ball_dropped = true;
      s.ball_vel = {};
    }
  }
  ++s.step_count;
  for (double v : s.observation())
    if (!std::isfinite(v)) throw SimulationError("non-finite tilted table state");
  TableStep out;
  out.reward = (!s.ball_trapped && !s.ball_dropped && layout.target_zone.contains(s.ball_pos)) ? 1.0 : 0.0;
  out.done = s.step_count >= layout.episode_length;
  out.state = s;
  return out;
}

/// Environment wrapper for either table task.
class TiltedTableEnv final : public Environment {
 public:
  explicit TiltedTableEnv(TableLayout layout) : layout_(std::move(layout)) {
    layout_.validate();
    spec_.name = layout_.name;
    spec_.state_dim = 10;
    spec_.action_dim = 3;
    spec_.action_bounds = ActionBounds::symmetric(3, 1.0);
    spec_.episode_length = layout_.episode_length;
    spec_.control_dt = layout_.control_dt;
    spec_.state_names = {"gripper_x", "gripper_y", "gripper_vx", "gripper_vy", "finger_angle",
                         "finger_angvel", "ball_x", "ball_y", "ball_vx", "ball_vy"};
  }

  const EnvSpec& spec() const override { return spec_; }
  const TableLayout& layout() const { return layout_; }
  const TiltedTableState& state() const { return state_; }
  void set_state(const TiltedTableState& s) { state_ = s; }

  std::vector<double> reset(Rng& rng) override {
    state_ = aif::env::reset(layout_, rng);
    return state_.observation();
  }

  StepResult step(std::span<const double> action) override {
    const auto out = aif::env::step(state_, action, layout_, layout_.control_dt);
    state_ = out.state;
    return {state_.observation(), out.reward, out.done};
  }

  std::vector<double> observation() const override { return state_.observation(); }
  std::size_t steps_taken() const override { return state_.step_count; }
  std::array<double, 2> visit_point() const override { return {state_.ball_pos.x, state_.ball_pos.y}; }
  VisitExtent visit_extent() const override {
    return {-layout_.half_width(), layout_.half_width(), 0.0, layout_.table_extent.y};
  }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<TiltedTableEnv>(*this); }

 private:
  TableLayout layout_;
  EnvSpec spec_;
  TiltedTableState state_;
};

}  // namespace aif::env
