#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "aif/errors.hpp"

namespace aif {

struct NllResult {
  double value = 0.0;
  std::vector<double> grad_mean;
};

/// Negative log density of N(target; mean, sigma^2 I) and its gradient with
/// respect to the mean.
inline NllResult gaussian_nll(std::span<const double> mean, std::span<const double> target,
                              double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive", "sigma");
  if (mean.size() != target.size()) throw ShapeError("mean and target differ in dimension");
  const double var = sigma * sigma;
  NllResult r;
  r.grad_mean.resize(mean.size());
  double sq = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double diff = mean[j] - target[j];
    sq += diff * diff;
    r.grad_mean[j] = diff / var;
  }
  r.value = 0.5 * sq / var +
            0.5 * static_cast<double>(mean.size()) * std::log(2.0 * std::numbers::pi * var);
  return r;
}

/// ln N(z; 0, sigma^2 I) for a residual vector given by its squared norm.
inline double gaussian_log_density(double squared_residual, std::size_t dim, double sigma) {
  const double var = sigma * sigma;
  return -0.5 * squared_residual / var -
         0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * var);
}

}  // namespace aif
