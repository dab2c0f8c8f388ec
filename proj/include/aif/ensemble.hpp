#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "aif/errors.hpp"
#include "aif/gaussian.hpp"
#include "aif/mlp.hpp"
#include "aif/normalizer.hpp"
#include "aif/random.hpp"
#include "aif/serialize.hpp"

namespace aif {

/// One member of the ensemble: a dynamics network predicting the normalized
/// state delta and a reward network predicting the normalized reward.
struct Particle {
  MlpParams dynamics;
  MlpParams reward;
  bool operator==(const Particle&) const = default;
};

struct EnsembleParams {
  std::vector<Particle> particles;

  std::size_t size() const { return particles.size(); }
  bool operator==(const EnsembleParams&) const = default;

  void validate() const {
    if (particles.size() < 2) throw ConfigError("ensemble needs at least 2 particles", "n");
    const auto shape = [](const MlpParams& p) {
      std::vector<std::size_t> s;
      for (const auto& l : p.layers) {
        s.push_back(l.in_dim());
        s.push_back(l.out_dim());
      }
      return s;
    };
    for (const auto& p : particles) {
      p.dynamics.validate();
      p.reward.validate();
      if (shape(p.dynamics) != shape(particles.front().dynamics) ||
          shape(p.reward) != shape(particles.front().reward))
        throw ShapeError("particles do not share one architecture");
    }
  }
};

struct GaussianHeadConfig {
  double sigma_x = 0.1;
  double sigma_r = 0.1;

  void validate() const {
    if (!(sigma_x > 0.0)) throw ConfigError("sigma_x must be positive", "sigma_x");
    if (!(sigma_r > 0.0)) throw ConfigError("sigma_r must be positive", "sigma_r");
  }
  bool operator==(const GaussianHeadConfig&) const = default;
};

struct EnsembleArch {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::tanh;

  std::vector<std::size_t> dynamics_layers() const {
    std::vector<std::size_t> s{state_dim + action_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(state_dim);
    return s;
  }
  std::vector<std::size_t> reward_layers() const {
    std::vector<std::size_t> s{state_dim + action_dim};
    s.insert(s.end(), hidden.begin(), hidden.end());
    s.push_back(1);
    return s;
  }
  bool operator==(const EnsembleArch&) const = default;
};

namespace stream {
inline constexpr std::uint64_t dynamics_init = 1;
inline constexpr std::uint64_t reward_init = 2;
}  // namespace stream

/// n independently initialized particles. Particle i's networks draw from
/// their own streams derived from (seed, i), so the ensemble is a
/// deterministic function of the seed.
inline EnsembleParams init_ensemble(std::span<const std::size_t> dynamics_layers,
                                    std::span<const std::size_t> reward_layers, std::size_t n,
                                    std::uint64_t seed, Activation activation = Activation::tanh) {
  if (n < 2) throw ConfigError("ensemble needs at least 2 particles", "n");
  EnsembleParams ens;
  ens.particles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng dyn_rng(derive_seed(seed, stream::dynamics_init, i));
    Rng rew_rng(derive_seed(seed, stream::reward_init, i));
    ens.particles.push_back(Particle{init_mlp(dynamics_layers, activation, dyn_rng),
                                     init_mlp(reward_layers, activation, rew_rng)});
  }
  return ens;
}

/// Shorthand where both networks use `layers` apart from a scalar reward head.
inline EnsembleParams init_ensemble(std::span<const std::size_t> layers, std::size_t n,
                                    std::uint64_t seed, Activation activation = Activation::tanh) {
  if (layers.size() < 2) throw ConfigError("architecture needs at least two layer sizes", "arch");
  std::vector<std::size_t> reward(layers.begin(), layers.end());
  reward.back() = 1;
  return init_ensemble(layers, reward, n, seed, activation);
}

inline EnsembleParams init_ensemble(const EnsembleArch& arch, std::size_t n, std::uint64_t seed) {
  const auto dyn = arch.dynamics_layers();
  const auto rew = arch.reward_layers();
  return init_ensemble(dyn, rew, n, seed, arch.activation);
}

/// Ensemble parameters together with the shared normalization statistics and
/// Gaussian head widths that turn network outputs into densities.
struct EnsembleModel {
  EnsembleArch arch;
  EnsembleParams params;
  GaussianHeadConfig heads;
  Normalizer normalizer;
  std::uint64_t seed = 0;

  static EnsembleModel create(const EnsembleArch& arch, std::size_t n, std::uint64_t seed,
                              GaussianHeadConfig heads = {}) {
    heads.validate();
    return {arch, init_ensemble(arch, n, seed), heads,
            Normalizer::empty(arch.state_dim, arch.action_dim), seed};
  }

  std::size_t size() const { return params.size(); }
  std::size_t state_dim() const { return arch.state_dim; }
  std::size_t action_dim() const { return arch.action_dim; }
  bool operator==(const EnsembleModel&) const = default;
};

// ---------------------------------------------------------------------------
// Normalized network inputs and outputs.

/// [ (x - m_x)/s_x ; (a - m_a)/s_a ] for a batch of states and actions.
inline void normalized_input(const Normalizer& norm, const Matrix& states, const Matrix& actions,
                             Matrix& out) {
  const std::size_t batch = states.cols;
  out.rows = states.rows + actions.rows;
  out.cols = batch;
  out.data.resize(out.rows * batch);
  for (std::size_t j = 0; j < states.rows; ++j) {
    const double m = norm.state.shift_of(j);
    const double s = norm.state.scale_of(j);
    const double* src = states.data.data() + j * batch;
    double* dst = out.data.data() + j * batch;
    for (std::size_t b = 0; b < batch; ++b) dst[b] = (src[b] - m) / s;
  }
  for (std::size_t j = 0; j < actions.rows; ++j) {
    const double m = norm.action.shift_of(j);
    const double s = norm.action.scale_of(j);
    const double* src = actions.data.data() + j * batch;
    double* dst = out.data.data() + (states.rows + j) * batch;
    for (std::size_t b = 0; b < batch; ++b) dst[b] = (src[b] - m) / s;
  }
}

struct Transition {
  std::vector<double> x_prev;
  std::vector<double> action;
  std::vector<double> x_next;
  double reward = 0.0;
  bool operator==(const Transition&) const = default;
};

// ---------------------------------------------------------------------------
// Optimizer.

struct RmsPropConfig {
  double learning_rate = 1e-3;
  double decay = 0.99;
  double epsilon = 1e-8;
};

struct RmsPropState {
  std::vector<MlpGradients> dynamics_sq;
  std::vector<MlpGradients> reward_sq;

  static RmsPropState for_ensemble(const EnsembleParams& ens) {
    RmsPropState s;
    for (const auto& p : ens.particles) {
      s.dynamics_sq.push_back(zeros_like(p.dynamics));
      s.reward_sq.push_back(zeros_like(p.reward));
    }
    return s;
  }
  bool operator==(const RmsPropState&) const = default;
};

namespace detail {

inline void rmsprop_update(std::vector<double>& param, std::vector<double>& sq,
                           const std::vector<double>& grad, const RmsPropConfig& cfg) {
  for (std::size_t k = 0; k < param.size(); ++k) {
    sq[k] = cfg.decay * sq[k] + (1.0 - cfg.decay) * grad[k] * grad[k];
    param[k] -= cfg.learning_rate * grad[k] / (std::sqrt(sq[k]) + cfg.epsilon);
  }
}

inline void rmsprop_update(MlpParams& params, MlpGradients& sq, const MlpGradients& grads,
                           const RmsPropConfig& cfg) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    rmsprop_update(params.layers[l].weight.data, sq[l].weight.data, grads[l].weight.data, cfg);
    rmsprop_update(params.layers[l].bias, sq[l].bias, grads[l].bias, cfg);
  }
}

// Mean Gaussian NLL of `net` on (input -> target) columns; gradients of the
// mean loss are written into `grads`.
inline double fit_head(const MlpParams& net, const Matrix& input, const Matrix& target,
                       double sigma, MlpGradients& grads) {
  const ForwardCache cache = forward_cached(net, input);
  const Matrix& out = cache.output();
  const std::size_t batch = input.cols;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const double var = sigma * sigma;
  Matrix dy(out.rows, batch);
  double sq = 0.0;
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    const double diff = out.data[k] - target.data[k];
    sq += diff * diff;
    dy.data[k] = diff / var * inv_batch;
  }
  backward_batch(net, cache, dy, grads);
  return 0.5 * sq / var * inv_batch +
         0.5 * static_cast<double>(out.rows) * std::log(2.0 * std::numbers::pi * var);
}

struct TrainingBatch {
  Matrix dynamics_input;
  Matrix dynamics_target;
  Matrix reward_input;
  Matrix reward_target;
};

inline TrainingBatch make_training_batch(const EnsembleModel& model,
                                         std::span<const Transition> data,
                                         std::span<const std::size_t> indices) {
  const std::size_t dx = model.state_dim();
  const std::size_t da = model.action_dim();
  const std::size_t batch = indices.size();
  const Normalizer& norm = model.normalizer;
  Matrix prev(dx, batch), next(dx, batch), act(da, batch);
  TrainingBatch tb;
  tb.dynamics_target = Matrix(dx, batch);
  tb.reward_target = Matrix(1, batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Transition& t = data[indices[b]];
    if (t.x_prev.size() != dx || t.x_next.size() != dx || t.action.size() != da)
      throw ShapeError("transition dimensions do not match the ensemble");
    for (std::size_t j = 0; j < dx; ++j) {
      prev(j, b) = t.x_prev[j];
      next(j, b) = t.x_next[j];
      tb.dynamics_target(j, b) =
          (t.x_next[j] - t.x_prev[j] - norm.delta.shift_of(j)) / norm.delta.scale_of(j);
    }
    for (std::size_t j = 0; j < da; ++j) act(j, b) = t.action[j];
    tb.reward_target(0, b) = (t.reward - norm.reward.shift_of(0)) / norm.reward.scale_of(0);
  }
  normalized_input(norm, prev, act, tb.dynamics_input);
  normalized_input(norm, next, act, tb.reward_input);
  return tb;
}

inline double train_particle(EnsembleModel& model, std::size_t i, const TrainingBatch& tb,
                             RmsPropState& opt, const RmsPropConfig& cfg) {
  Particle& p = model.params.particles[i];
  MlpGradients gd = zeros_like(p.dynamics);
  MlpGradients gr = zeros_like(p.reward);
  const double loss =
      fit_head(p.dynamics, tb.dynamics_input, tb.dynamics_target, model.heads.sigma_x, gd) +
      fit_head(p.reward, tb.reward_input, tb.reward_target, model.heads.sigma_r, gr);
  if (!std::isfinite(loss))
    throw TrainingDivergence("non-finite loss in particle " + std::to_string(i), i);
  rmsprop_update(p.dynamics, opt.dynamics_sq[i], gd, cfg);
  rmsprop_update(p.reward, opt.reward_sq[i], gr, cfg);
  return loss;
}

}  // namespace detail

/// One optimizer step for every particle on the same batch. Returns the mean
/// loss (dynamics NLL + reward NLL, normalized units) of each particle
/// before its update.
inline std::vector<double> train_step(EnsembleModel& model, std::span<const Transition> batch,
                                      RmsPropState& opt, const RmsPropConfig& cfg = {}) {
  if (batch.empty()) throw ConfigError("training batch is empty", "batch");
  std::vector<std::size_t> idx(batch.size());
  for (std::size_t b = 0; b < idx.size(); ++b) idx[b] = b;
  const auto tb = detail::make_training_batch(model, batch, idx);
  std::vector<double> losses(model.size());
  for (std::size_t i = 0; i < model.size(); ++i)
    losses[i] = detail::train_particle(model, i, tb, opt, cfg);
  return losses;
}

/// One optimizer step for every particle on the shared batch `data[indices]`.
inline std::vector<double> train_step(EnsembleModel& model, std::span<const Transition> data,
                                      std::span<const std::size_t> indices, RmsPropState& opt,
                                      const RmsPropConfig& cfg = {}) {
  if (indices.empty()) throw ConfigError("training batch is empty", "batch");
  const auto tb = detail::make_training_batch(model, data, indices);
  std::vector<double> losses(model.size());
  for (std::size_t i = 0; i < model.size(); ++i)
    losses[i] = detail::train_particle(model, i, tb, opt, cfg);
  return losses;
}

/// One optimizer step where particle i trains on `data[indices[i][...]]`.
inline std::vector<double> train_step(EnsembleModel& model, std::span<const Transition> data,
                                      std::span<const std::vector<std::size_t>> indices,
                                      RmsPropState& opt, const RmsPropConfig& cfg = {}) {
  if (indices.size() != model.size()) throw ShapeError("one index set per particle required");
  std::vector<double> losses(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (indices[i].empty()) throw ConfigError("training batch is empty", "batch");
    const auto tb = detail::make_training_batch(model, data, indices[i]);
    losses[i] = detail::train_particle(model, i, tb, opt, cfg);
  }
  return losses;
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace detail {

inline void write_mlp(io::BinaryWriter& w, const MlpParams& p) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(p.activation));
  w.put_size(p.layers.size());
  for (const auto& l : p.layers) {
    w.put_size(l.weight.rows);
    w.put_size(l.weight.cols);
    w.put_vector(l.weight.data);
    w.put_vector(l.bias);
  }
}

inline MlpParams read_mlp(io::BinaryReader& r) {
  MlpParams p;
  const auto act = r.get<std::uint8_t>();
  if (act > 2) throw FormatError("unknown activation tag");
  p.activation = static_cast<Activation>(act);
  p.layers.resize(r.get_size());
  for (auto& l : p.layers) {
    l.weight.rows = r.get_size();
    l.weight.cols = r.get_size();
    l.weight.data = r.get_vector<double>();
    l.bias = r.get_vector<double>();
  }
  p.validate();
  return p;
}

inline void write_gradients(io::BinaryWriter& w, const MlpGradients& g) {
  w.put_size(g.size());
  for (const auto& l : g) {
    w.put_size(l.weight.rows);
    w.put_size(l.weight.cols);
    w.put_vector(l.weight.data);
    w.put_vector(l.bias);
  }
}

inline MlpGradients read_gradients(io::BinaryReader& r) {
  MlpGradients g(r.get_size());
  for (auto& l : g) {
    l.weight.rows = r.get_size();
    l.weight.cols = r.get_size();
    l.weight.data = r.get_vector<double>();
    l.bias = r.get_vector<double>();
  }
  return g;
}

}  // namespace detail

inline constexpr std::uint32_t kEnsembleFormatVersion = 1;

inline void write_ensemble(io::BinaryWriter& w, const EnsembleModel& m) {
  w.put<std::uint32_t>(kEnsembleFormatVersion);
  w.put_size(m.arch.state_dim);
  w.put_size(m.arch.action_dim);
  w.put_vector(std::vector<std::uint64_t>(m.arch.hidden.begin(), m.arch.hidden.end()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.arch.activation));
  w.put<std::uint64_t>(m.seed);
  w.put<double>(m.heads.sigma_x);
  w.put<double>(m.heads.sigma_r);
  w.put_size(m.params.size());
  for (const auto& p : m.params.particles) {
    detail::write_mlp(w, p.dynamics);
    detail::write_mlp(w, p.reward);
  }
  m.normalizer.write(w);
}

inline EnsembleModel read_ensemble(io::BinaryReader& r) {
  if (r.get<std::uint32_t>() != kEnsembleFormatVersion)
    throw FormatError("unsupported ensemble format version");
  EnsembleModel m;
  m.arch.state_dim = r.get_size();
  m.arch.action_dim = r.get_size();
  const auto hidden = r.get_vector<std::uint64_t>();
  m.arch.hidden.assign(hidden.begin(), hidden.end());
  m.arch.activation = static_cast<Activation>(r.get<std::uint8_t>());
  m.seed = r.get<std::uint64_t>();
  m.heads.sigma_x = r.get<double>();
  m.heads.sigma_r = r.get<double>();
  m.params.particles.resize(r.get_size());
  for (auto& p : m.params.particles) {
    p.dynamics = detail::read_mlp(r);
    p.reward = detail::read_mlp(r);
  }
  m.normalizer = Normalizer::read(r);
  m.params.validate();
  return m;
}

inline void write_optimizer(io::BinaryWriter& w, const RmsPropState& s) {
  w.put_size(s.dynamics_sq.size());
  for (std::size_t i = 0; i < s.dynamics_sq.size(); ++i) {
    detail::write_gradients(w, s.dynamics_sq[i]);
    detail::write_gradients(w, s.reward_sq[i]);
  }
}

inline RmsPropState read_optimizer(io::BinaryReader& r) {
  RmsPropState s;
  const std::size_t n = r.get_size();
  for (std::size_t i = 0; i < n; ++i) {
    s.dynamics_sq.push_back(detail::read_gradients(r));
    s.reward_sq.push_back(detail::read_gradients(r));
  }
  return s;
}

inline constexpr char kEnsembleMagic[] = "AIFENS01";

inline void save_ensemble(const std::string& path, const EnsembleModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  io::put_tag(os, kEnsembleMagic);
  io::BinaryWriter w(os);
  write_ensemble(w, m);
  w.check();
}

inline EnsembleModel load_ensemble(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  io::BinaryReader r(is);
  r.expect_tag(kEnsembleMagic);
  return read_ensemble(r);
}

}  // namespace aif
