#pragma once

// Parameter initialization and small reusable blocks built on the tape ops.

#include <cmath>
#include <string>
#include <vector>

#include "igstf/numkernel.hpp"
#include "igstf/rng.hpp"

namespace igstf {

/// Adds freshly initialized parameters to a store from one seeded stream.
class Initializer {
 public:
  Initializer(ParamStore& store, Rng& rng) : store_(store), rng_(rng) {}

  // Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
  void weight(const std::string& name, std::size_t in, std::size_t out) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor t({in, out});
    for (double& v : t.storage()) v = rng_.uniform(-a, a);
    store_.add(name, std::move(t));
  }

  void zeros(const std::string& name, Shape shape) { store_.add(name, Tensor(std::move(shape), 0.0)); }
  void ones(const std::string& name, Shape shape) { store_.add(name, Tensor(std::move(shape), 1.0)); }

  void embedding(const std::string& name, std::size_t rows, std::size_t cols, double sd = 0.01) {
    Tensor t({rows, cols});
    for (double& v : t.storage()) v = rng_.normal(0.0, sd);
    store_.add(name, std::move(t));
  }

  // prefix.W1, prefix.b1, prefix.W2, prefix.b2
  void mlp2(const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out) {
    weight(prefix + ".W1", in, hidden);
    zeros(prefix + ".b1", {hidden});
    weight(prefix + ".W2", hidden, out);
    zeros(prefix + ".b2", {out});
  }

  void linear(const std::string& prefix, std::size_t in, std::size_t out) {
    weight(prefix + ".W", in, out);
    zeros(prefix + ".b", {out});
  }

  void layer_norm(const std::string& prefix, std::size_t d) {
    ones(prefix + ".gain", {d});
    zeros(prefix + ".bias", {d});
  }

 private:
  ParamStore& store_;
  Rng& rng_;
};

inline Var linear_layer(Tape& t, const ParamStore& p, const std::string& prefix, Var x) {
  return linear(x, t.param(p, prefix + ".W"), t.param(p, prefix + ".b"));
}

/// Two-layer perceptron with a ReLU between the layers.
inline Var mlp2(Tape& t, const ParamStore& p, const std::string& prefix, Var x) {
  Var h = relu(linear(x, t.param(p, prefix + ".W1"), t.param(p, prefix + ".b1")));
  return linear(h, t.param(p, prefix + ".W2"), t.param(p, prefix + ".b2"));
}

inline Var layer_norm_layer(Tape& t, const ParamStore& p, const std::string& prefix, Var x) {
  return layer_norm(x, t.param(p, prefix + ".gain"), t.param(p, prefix + ".bias"));
}

// ------------------------------------------------------------------- pair grids

/// [M x h] -> [M x N x h], row k repeated for every sensor.
inline Var tile_over_sensors(Var x, std::size_t n) {
  const std::size_t m = x.dim(0), h = x.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(m * n);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < n; ++j) idx.push_back(k);
  return reshape(gather_rows(x, idx), {m, n, h});
}

/// [N x h] -> [M x N x h], the sensor table repeated for every incident.
inline Var tile_over_incidents(Var x, std::size_t m) {
  const std::size_t n = x.dim(0), h = x.dim(1);
  std::vector<std::size_t> idx;
  idx.reserve(m * n);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < n; ++j) idx.push_back(j);
  return reshape(gather_rows(x, idx), {m, n, h});
}

/// Sum over the leading axis: [M x ...] -> [...].
inline Var sum_leading(Var x) {
  Shape rest(x.shape().begin() + 1, x.shape().end());
  const std::size_t m = x.dim(0), r = shape_size(rest);
  Var ones = x.tape->constant(Tensor({1, m}, 1.0));
  return reshape(matmul(ones, reshape(x, {m, r})), rest);
}

/// Broadcast of a [T x N x d] tensor from a [N x d] one (every step equal).
inline Var repeat_steps(Var x, std::size_t steps) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  Var ones = x.tape->constant(Tensor({steps, 1}, 1.0));
  return reshape(matmul(ones, reshape(x, {1, n * d})), {steps, n, d});
}

/// Last time step of a [T x N x d] sequence as [N x d].
inline Var last_step(Var h) {
  const std::size_t t = h.dim(0);
  return reshape(slice(h, 0, t - 1, t), {h.dim(1), h.dim(2)});
}

}  // namespace igstf
