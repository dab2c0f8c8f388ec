#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "aif/efe.hpp"
#include "aif/ensemble.hpp"
#include "aif/generative_model.hpp"
#include "aif/random.hpp"

namespace aif::oracle {

/// E_k E_{x ~ N(mu_k, sigma^2)} [ ln N(x; mu_k) - ln( (1/Z) sum_{j != k} N(x; mu_j) ) ]
/// by trapezoid quadrature on a dense grid. Z = n - 1 gives the self-excluding
/// value; Z = n adds the constant ln(n / (n - 1)).
inline double gaussian_family_info_gain(std::span<const double> means, double sigma,
                                        InnerNormalization mode, std::size_t grid = 40001) {
  const std::size_t n = means.size();
  if (n < 2) throw ConfigError("need at least two means", "n");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive", "sigma");
  const auto [lo_it, hi_it] = std::minmax_element(means.begin(), means.end());
  const double lo = *lo_it - 12.0 * sigma;
  const double hi = *hi_it + 12.0 * sigma;
  const double h = (hi - lo) / static_cast<double>(grid - 1);
  const double z = mode == InnerNormalization::include_self ? static_cast<double>(n)
                                                              : static_cast<double>(n - 1);
  const double log_norm = -std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
  auto log_pdf = [&](double x, double mu) {
    const double u = (x - mu) / sigma;
    return log_norm - 0.5 * u * u;
  };
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t g = 0; g < grid; ++g) {
      const double x = lo + h * static_cast<double>(g);
      const double lk = log_pdf(x, means[k]);
      double others = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != k) others += std::exp(log_pdf(x, means[j]) - lk);
      const double integrand = std::exp(lk) * (std::log(z) - std::log(others));
      acc += (g == 0 || g + 1 == grid) ? 0.5 * integrand : integrand;
    }
    total += acc * h;
  }
  return total / static_cast<double>(n);
}

/// Ensemble whose particle k moves a scalar state from x0 to N(x0 + mu_k,
/// sigma^2) regardless of the action and predicts zero reward. All weights
/// are zero; the output bias carries mu_k. The identity normalizer keeps the
/// densities in raw coordinates.
inline EnsembleModel gaussian_family_model(std::span<const double> means, double sigma,
                                           double sigma_r = 1.0) {
  EnsembleArch arch{1, 1, {2}, Activation::tanh};
  EnsembleModel m = EnsembleModel::create(arch, means.size(), 0, {sigma, sigma_r});
  m.normalizer = Normalizer::identity(1, 1);
  for (std::size_t k = 0; k < means.size(); ++k) {
    for (auto* net : {&m.params.particles[k].dynamics, &m.params.particles[k].reward})
      for (auto& layer : net->layers) {
        std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
      }
    m.params.particles[k].dynamics.layers.back().bias[0] = means[k];
  }
  return m;
}

inline std::vector<double> spread_means(std::size_t n, double lo, double hi) {
  std::vector<double> means(n);
  for (std::size_t k = 0; k < n; ++k)
    means[k] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  return means;
}

struct BenchRow {
  std::string mode;
  std::size_t n = 0;
  std::size_t draws = 0;
  double mean = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
  double oracle = 0.0;
  double bias = 0.0;
};

/// Runs the library estimator `draws` times on the Gaussian family with means
/// spread over [-2, 2] and one-step plans. Both normalization modes are
/// evaluated from the same likelihood matrices.
inline std::vector<BenchRow> bench_estimator(std::size_t n, std::size_t draws, double sigma = 1.0,
                                             std::uint64_t seed = 0) {
  if (draws == 0) throw ConfigError("draws must be positive", "draws");
  const auto means = spread_means(n, -2.0, 2.0);
  const EnsembleModel model = gaussian_family_model(means, sigma);
  const ActionPlan plan = ActionPlan::zeros(1, 1);
  const std::vector<double> x0{0.0};
  EfeConfig incl;
  incl.inner_normalization = InnerNormalization::include_self;
  EfeConfig excl = incl;
  excl.inner_normalization = InnerNormalization::exclude_self;

  Rng rng(seed);
  double s_p = 0.0, ss_p = 0.0, s_c = 0.0, ss_c = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    const auto res = info_gain_nmc(model, x0, plan, incl, rng);
    const double c = info_gain_from_log_likelihoods(res.log_likelihood, excl);
    s_p += res.info_gain;
    ss_p += res.info_gain * res.info_gain;
    s_c += c;
    ss_c += c * c;
  }
  auto row = [&](const char* name, double s, double ss, InnerNormalization mode) {
    BenchRow r;
    r.mode = name;
    r.n = n;
    r.draws = draws;
    const auto nd = static_cast<double>(draws);
    r.mean = s / nd;
    r.variance = draws > 1 ? std::max(0.0, (ss - nd * r.mean * r.mean) / (nd - 1.0)) : 0.0;
    r.std_error = std::sqrt(r.variance / nd);
    r.oracle = gaussian_family_info_gain(means, sigma, mode);
    r.bias = r.mean - r.oracle;
    return r;
  };
  return {row("include_self", s_p, ss_p, InnerNormalization::include_self),
          row("exclude_self", s_c, ss_c, InnerNormalization::exclude_self)};
}

}  // namespace aif::oracle
