#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "aif/mlp.hpp"
#include "aif/random.hpp"

namespace aif::checks {

using LayerConfig = std::tuple<std::vector<std::size_t>, Activation>;

/// Layer shapes covering the model heads used by the environments plus
/// small corner cases.
inline std::vector<LayerConfig> gradient_configs() {
  return {{{12, 64, 64, 10}, Activation::tanh}, {{13, 64, 64, 1}, Activation::tanh},
          {{3, 64, 2}, Activation::relu},       {{13, 64, 10}, Activation::relu},
          {{3, 8, 8, 8, 2}, Activation::tanh},  {{4, 6, 3}, Activation::identity},
          {{1, 1}, Activation::tanh}};
}

inline std::string describe(const LayerConfig& c) {
  std::string s;
  for (auto n : std::get<0>(c)) s += (s.empty() ? "" : "-") + std::to_string(n);
  return s + " " + to_string(std::get<1>(c));
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::abs(a) + std::abs(b));
}

/// Largest relative error between backprop and central differences (h =
/// 1e-5) of the loss g . f(x), over every parameter and input component.
inline double worst_gradient_error(const LayerConfig& config, std::uint64_t seed = 42) {
  const auto& [sizes, act] = config;
  Rng rng(seed);
  auto p = init_mlp(sizes, act, rng);
  std::vector<double> x(sizes.front()), g(sizes.back());
  for (double& v : x) v = uniform(rng, -1.0, 1.0);
  for (double& v : g) v = uniform(rng, -1.0, 1.0);
  auto loss = [&](const std::vector<double>& in) {
    const auto y = forward(p, in);
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) s += y[k] * g[k];
    return s;
  };
  const auto bw = backward(p, x, g);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    if (bw.params[l].weight.rows != p.layers[l].weight.rows || bw.params[l].weight.cols != p.layers[l].weight.cols)
      return INFINITY;
    for (int which = 0; which < 2; ++which) {
      auto& vals = which == 0 ? p.layers[l].weight.data : p.layers[l].bias;
      const auto& grads = which == 0 ? bw.params[l].weight.data : bw.params[l].bias;
      for (std::size_t k = 0; k < vals.size(); ++k) {
        const double orig = vals[k];
        vals[k] = orig + h;
        const double up = loss(x);
        vals[k] = orig - h;
        const double down = loss(x);
        vals[k] = orig;
        worst = std::max(worst, relative_error(grads[k], (up - down) / (2 * h)));
      }
    }
  }
  auto xx = x;
  for (std::size_t k = 0; k < xx.size(); ++k) {
    const double orig = xx[k];
    xx[k] = orig + h;
    const double up = loss(xx);
    xx[k] = orig - h;
    const double down = loss(xx);
    xx[k] = orig;
    worst = std::max(worst, relative_error(bw.input[k], (up - down) / (2 * h)));
  }
  return worst;
}

}  // namespace aif::checks
