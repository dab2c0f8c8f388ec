#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aif/generative_model.hpp"
#include "aif/random.hpp"

namespace aif::env {

struct EnvSpec {
  std::string name;
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  ActionBounds action_bounds;
  std::size_t episode_length = 0;
  double control_dt = 0.0;
  /// Names of the observation components, in vector order.
  std::vector<std::string> state_names;
};

struct StepResult {
  std::vector<double> state;
  double reward = 0.0;
  bool done = false;
};

/// Axis-aligned region over which visitation is histogrammed.
struct VisitExtent {
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
};

/// Uniform reset/step interface shared by all tasks. Instances are stateful
/// and single-threaded; use clone() for independent copies.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::vector<double> reset(Rng& rng) = 0;
  /// Actions outside the bounds are clipped.
  virtual StepResult step(std::span<const double> action) = 0;
  virtual std::vector<double> observation() const = 0;
  virtual std::size_t steps_taken() const = 0;

  /// The 2D point recorded in visitation histograms (ball position on the
  /// table, or position/velocity for 1D tasks).
  virtual std::array<double, 2> visit_point() const = 0;
  virtual VisitExtent visit_extent() const = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;
};

}  // namespace aif::env
