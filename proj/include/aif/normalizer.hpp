#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "aif/errors.hpp"
#include "aif/serialize.hpp"

namespace aif {

/// Per-dimension running mean/variance (Welford).
class RunningStats {
 public:
  RunningStats() = default;
  explicit RunningStats(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  std::size_t dim() const { return mean_.size(); }
  std::uint64_t count() const { return count_; }

  void push(std::span<const double> x) {
    if (x.size() != dim()) throw ShapeError("running stats dimension mismatch");
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x[j] - mean_[j];
      mean_[j] += d / n;
      m2_[j] += d * (x[j] - mean_[j]);
    }
  }

  double mean(std::size_t j) const { return mean_[j]; }

  /// Population standard deviation, with 1.0 substituted for degenerate
  /// dimensions so that constant signals pass through unscaled.
  double scale(std::size_t j) const {
    if (count_ < 2) return 1.0;
    const double sd = std::sqrt(m2_[j] / static_cast<double>(count_));
    return sd > 1e-8 ? sd : 1.0;
  }

  /// Identity transform: mean 0, scale 1 regardless of pushes.
  static RunningStats identity(std::size_t dim) {
    RunningStats s(dim);
    s.frozen_identity_ = true;
    return s;
  }

  double shift_of(std::size_t j) const { return frozen_identity_ ? 0.0 : mean(j); }
  double scale_of(std::size_t j) const { return frozen_identity_ ? 1.0 : scale(j); }

  void write(io::BinaryWriter& w) const {
    w.put<std::uint64_t>(count_);
    w.put<std::uint8_t>(frozen_identity_ ? 1 : 0);
    w.put_vector(mean_);
    w.put_vector(m2_);
  }

  static RunningStats read(io::BinaryReader& r) {
    RunningStats s;
    s.count_ = r.get<std::uint64_t>();
    s.frozen_identity_ = r.get<std::uint8_t>() != 0;
    s.mean_ = r.get_vector<double>();
    s.m2_ = r.get_vector<double>();
    if (s.mean_.size() != s.m2_.size()) throw FormatError("running stats size mismatch");
    return s;
  }

  bool operator==(const RunningStats&) const = default;

 private:
  std::uint64_t count_ = 0;
  bool frozen_identity_ = false;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// Statistics used to normalize network inputs (state, action) and
/// regression targets (state delta, reward).
struct Normalizer {
  RunningStats state;
  RunningStats action;
  RunningStats delta;
  RunningStats reward;

  static Normalizer empty(std::size_t state_dim, std::size_t action_dim) {
    return {RunningStats(state_dim), RunningStats(action_dim), RunningStats(state_dim),
            RunningStats(1)};
  }

  static Normalizer identity(std::size_t state_dim, std::size_t action_dim) {
    return {RunningStats::identity(state_dim), RunningStats::identity(action_dim),
            RunningStats::identity(state_dim), RunningStats::identity(1)};
  }

  void observe(std::span<const double> x_prev, std::span<const double> a,
               std::span<const double> x_next, double r) {
    state.push(x_prev);
    action.push(a);
    std::vector<double> d(x_prev.size());
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = x_next[j] - x_prev[j];
    delta.push(d);
    const double rr[1] = {r};
    reward.push(rr);
  }

  void write(io::BinaryWriter& w) const {
    state.write(w);
    action.write(w);
    delta.write(w);
    reward.write(w);
  }

  static Normalizer read(io::BinaryReader& r) {
    Normalizer n;
    n.state = RunningStats::read(r);
    n.action = RunningStats::read(r);
    n.delta = RunningStats::read(r);
    n.reward = RunningStats::read(r);
    return n;
  }

  bool operator==(const Normalizer&) const = default;
};

}  // namespace aif
