#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aif/errors.hpp"
#include "aif/random.hpp"

namespace aif {

/// Dense row-major matrix. Batched activations are stored features x batch so
/// that one feature row is contiguous over the batch.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

enum class Activation { tanh, relu, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "unknown";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'", "activation");
}

struct Layer {
  Matrix weight;  // out x in
  std::vector<double> bias;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }
  bool operator==(const Layer&) const = default;
};

/// Feed-forward network. The activation is applied after every layer except
/// the last, which is linear.
struct MlpParams {
  std::vector<Layer> layers;
  Activation activation = Activation::tanh;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
  bool operator==(const MlpParams&) const = default;

  void validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.weight.data.size() != layer.weight.rows * layer.weight.cols ||
          layer.bias.size() != layer.out_dim())
        throw ShapeError("layer " + std::to_string(l) + " has inconsistent storage");
      if (l > 0 && layers[l - 1].out_dim() != layer.in_dim())
        throw ShapeError("layer " + std::to_string(l) + " input does not chain");
      for (double w : layer.weight.data)
        if (!std::isfinite(w)) throw NumericalError("non-finite weight");
      for (double b : layer.bias)
        if (!std::isfinite(b)) throw NumericalError("non-finite bias");
    }
  }
};

/// Gradients share the layer layout of the parameters they belong to.
using MlpGradients = std::vector<Layer>;

inline MlpGradients zeros_like(const MlpParams& params) {
  MlpGradients g;
  g.reserve(params.layers.size());
  for (const auto& layer : params.layers)
    g.push_back(Layer{Matrix(layer.out_dim(), layer.in_dim()), std::vector<double>(layer.out_dim())});
  return g;
}

/// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// for weights and biases.
inline MlpParams init_mlp(std::span<const std::size_t> sizes, Activation activation, Rng& rng) {
  if (sizes.size() < 2) throw ConfigError("architecture needs at least two layer sizes", "arch");
  MlpParams params;
  params.activation = activation;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] == 0 || sizes[l + 1] == 0) throw ConfigError("zero-width layer", "arch");
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    Layer layer{Matrix(sizes[l + 1], sizes[l]), std::vector<double>(sizes[l + 1])};
    for (double& w : layer.weight.data) w = uniform(rng, -bound, bound);
    for (double& b : layer.bias) b = uniform(rng, -bound, bound);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace detail {

inline void activate(Activation a, std::span<double> v) {
  switch (a) {
    case Activation::tanh:
      for (double& x : v) x = std::tanh(x);
      break;
    case Activation::relu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::identity:
      break;
  }
}

// d(activation)/d(pre) expressed through the post-activation value.
inline double activation_slope(Activation a, double post) {
  switch (a) {
    case Activation::tanh: return 1.0 - post * post;
    case Activation::relu: return post > 0.0 ? 1.0 : 0.0;
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

// out = W x + b over a batch. The reduction runs over the input index in the
// outer loop, so a column's result never depends on the batch it sits in.
inline void affine(const Layer& layer, const Matrix& x, Matrix& out) {
  const std::size_t batch = x.cols;
  out.rows = layer.out_dim();
  out.cols = batch;
  out.data.resize(out.rows * batch);
  for (std::size_t o = 0; o < layer.out_dim(); ++o) {
    double* y = out.data.data() + o * batch;
    const double b = layer.bias[o];
    for (std::size_t j = 0; j < batch; ++j) y[j] = b;
    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
      const double w = layer.weight(o, i);
      const double* xi = x.data.data() + i * batch;
      for (std::size_t j = 0; j < batch; ++j) y[j] += w * xi[j];
    }
  }
}

}  // namespace detail

/// Batched forward pass; `input` is input_dim x batch.
inline Matrix forward_batch(const MlpParams& params, const Matrix& input) {
  if (params.layers.empty()) throw ShapeError("network has no layers");
  if (input.rows != params.input_dim())
    throw ShapeError("input has " + std::to_string(input.rows) + " rows, network expects " +
                     std::to_string(params.input_dim()));
  Matrix current = input;
  Matrix next;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    detail::affine(params.layers[l], current, next);
    if (l + 1 < params.layers.size()) detail::activate(params.activation, next.data);
    std::swap(current, next);
  }
  return current;
}

inline std::vector<double> forward(const MlpParams& params, std::span<const double> input) {
  Matrix x(input.size(), 1);
  std::copy(input.begin(), input.end(), x.data.begin());
  return forward_batch(params, x).data;
}

/// Activations of every layer for a batch, kept for backpropagation.
struct ForwardCache {
  std::vector<Matrix> activations;  // activations[0] is the input
  const Matrix& output() const { return activations.back(); }
};

inline ForwardCache forward_cached(const MlpParams& params, const Matrix& input) {
  if (input.rows != params.input_dim()) throw ShapeError("input dimension mismatch");
  ForwardCache cache;
  cache.activations.reserve(params.layers.size() + 1);
  cache.activations.push_back(input);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Matrix out;
    detail::affine(params.layers[l], cache.activations.back(), out);
    if (l + 1 < params.layers.size()) detail::activate(params.activation, out.data);
    cache.activations.push_back(std::move(out));
  }
  return cache;
}

/// Accumulates parameter gradients (summed over the batch) into `grads` and
/// returns the gradient with respect to the input.
inline Matrix backward_batch(const MlpParams& params, const ForwardCache& cache,
                             const Matrix& output_grad, MlpGradients& grads) {
  if (output_grad.rows != params.output_dim() || output_grad.cols != cache.output().cols)
    throw ShapeError("output gradient shape mismatch");
  if (grads.size() != params.layers.size()) throw ShapeError("gradient buffer shape mismatch");
  const std::size_t batch = output_grad.cols;
  Matrix delta = output_grad;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Layer& layer = params.layers[l];
    const Matrix& x = cache.activations[l];
    Layer& g = grads[l];
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double* d = delta.data.data() + o * batch;
      double bsum = 0.0;
      for (std::size_t j = 0; j < batch; ++j) bsum += d[j];
      g.bias[o] += bsum;
      for (std::size_t i = 0; i < layer.in_dim(); ++i) {
        const double* xi = x.data.data() + i * batch;
        double s = 0.0;
        for (std::size_t j = 0; j < batch; ++j) s += d[j] * xi[j];
        g.weight(o, i) += s;
      }
    }
    Matrix prev(layer.in_dim(), batch);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double* d = delta.data.data() + o * batch;
      for (std::size_t i = 0; i < layer.in_dim(); ++i) {
        const double w = layer.weight(o, i);
        double* p = prev.data.data() + i * batch;
        for (std::size_t j = 0; j < batch; ++j) p[j] += w * d[j];
      }
    }
    if (l > 0) {
      for (std::size_t k = 0; k < prev.data.size(); ++k)
        prev.data[k] *= detail::activation_slope(params.activation, x.data[k]);
    }
    delta = std::move(prev);
  }
  return delta;
}

struct BackwardResult {
  MlpGradients params;
  std::vector<double> input;
};

inline BackwardResult backward(const MlpParams& params, std::span<const double> input,
                               std::span<const double> output_grad) {
  if (input.size() != params.input_dim()) throw ShapeError("input dimension mismatch");
  if (output_grad.size() != params.output_dim()) throw ShapeError("output gradient dimension mismatch");
  Matrix x(input.size(), 1);
  std::copy(input.begin(), input.end(), x.data.begin());
  Matrix dy(output_grad.size(), 1);
  std::copy(output_grad.begin(), output_grad.end(), dy.data.begin());
  BackwardResult result{zeros_like(params), {}};
  result.input = backward_batch(params, forward_cached(params, x), dy, result.params).data;
  return result;
}

}  // namespace aif
