#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "aif/env/environment.hpp"
#include "aif/errors.hpp"
#include "aif/serialize.hpp"

namespace aif::agent {

struct EpisodeLog {
  std::size_t episode = 0;
  double cumulative_reward = 0.0;
  double intrinsic_mean = 0.0;
  double extrinsic_mean = 0.0;
  std::vector<std::array<double, 2>> ball_visitation;
  double wall_time = 0.0;
  bool aborted = false;
  std::string error;

  bool operator==(const EpisodeLog&) const = default;
};

/// Column order of episode CSV logs.
inline constexpr const char* kEpisodeCsvHeader =
    "episode,cumulative_reward,intrinsic_mean,extrinsic_mean,wall_time";

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string episode_csv_row(const EpisodeLog& log) {
  return std::to_string(log.episode) + "," + format_double(log.cumulative_reward) + "," +
         format_double(log.intrinsic_mean) + "," + format_double(log.extrinsic_mean) + "," +
         format_double(log.wall_time);
}

inline void write_episode_csv(const std::string& path, const std::vector<EpisodeLog>& logs) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  os << kEpisodeCsvHeader << "\n";
  for (const auto& l : logs) os << episode_csv_row(l) << "\n";
}

inline void append_episode_csv(const std::string& path, const EpisodeLog& log) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw FormatError("cannot append to " + path);
  os << episode_csv_row(log) << "\n";
}

/// Histogram of visited 2D points; row r covers the r-th band of the y range
/// (bottom first), column c the c-th band of the x range.
class VisitationGrid {
 public:
  VisitationGrid() = default;
  VisitationGrid(std::size_t bins, env::VisitExtent extent)
      : bins_(bins), extent_(extent), counts_(bins * bins, 0) {}

  std::size_t bins() const { return bins_; }
  std::uint64_t count(std::size_t row, std::size_t col) const { return counts_[row * bins_ + col]; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  void add(std::array<double, 2> p) {
    const auto cell = [this](double v, double lo, double hi) {
      const double f = (v - lo) / (hi - lo);
      const auto k = static_cast<std::ptrdiff_t>(std::floor(f * static_cast<double>(bins_)));
      return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(bins_) - 1));
    };
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) return;
    ++counts_[cell(p[1], extent_.y_min, extent_.y_max) * bins_ + cell(p[0], extent_.x_min, extent_.x_max)];
  }

  std::size_t nonzero_cells() const {
    return static_cast<std::size_t>(std::count_if(counts_.begin(), counts_.end(), [](auto c) { return c > 0; }));
  }

  /// Nonzero cells in rows covering the upper half of the y range.
  std::size_t nonzero_cells_upper_half() const {
    std::size_t n = 0;
    for (std::size_t r = bins_ / 2; r < bins_; ++r)
      for (std::size_t c = 0; c < bins_; ++c)
        if (count(r, c) > 0) ++n;
    return n;
  }

  void write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path);
    for (std::size_t r = 0; r < bins_; ++r) {
      for (std::size_t c = 0; c < bins_; ++c) os << (c ? "," : "") << count(r, c);
      os << "\n";
    }
  }

  void write(io::BinaryWriter& w) const {
    w.put_size(bins_);
    w.put<double>(extent_.x_min);
    w.put<double>(extent_.x_max);
    w.put<double>(extent_.y_min);
    w.put<double>(extent_.y_max);
    w.put_vector(counts_);
  }

  static VisitationGrid read(io::BinaryReader& r) {
    VisitationGrid g;
    g.bins_ = r.get_size();
    g.extent_.x_min = r.get<double>();
    g.extent_.x_max = r.get<double>();
    g.extent_.y_min = r.get<double>();
    g.extent_.y_max = r.get<double>();
    g.counts_ = r.get_vector<std::uint64_t>();
    if (g.counts_.size() != g.bins_ * g.bins_) throw FormatError("visitation grid size mismatch");
    return g;
  }

  bool operator==(const VisitationGrid& o) const { return bins_ == o.bins_ && counts_ == o.counts_; }

 private:
  std::size_t bins_ = 0;
  env::VisitExtent extent_;
  std::vector<std::uint64_t> counts_;
};

/// One row per control step: state before the step, action, reward.
inline void write_trajectory_csv(const std::string& path, const std::vector<std::string>& state_names,
                                 std::size_t action_dim, const std::vector<std::vector<double>>& states,
                                 const std::vector<std::vector<double>>& actions,
                                 const std::vector<double>& rewards) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  os << "step";
  for (const auto& n : state_names) os << "," << n;
  for (std::size_t j = 0; j < action_dim; ++j) os << ",action_" << j;
  os << ",reward\n";
  for (std::size_t t = 0; t < actions.size(); ++t) {
    os << t;
    for (double v : states[t]) os << "," << format_double(v);
    for (double v : actions[t]) os << "," << format_double(v);
    os << "," << format_double(rewards[t]) << "\n";
  }
}

}  // namespace aif::agent
