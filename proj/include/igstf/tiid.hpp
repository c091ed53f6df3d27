#pragma once

// Temporal incident impact decay: a per-node initial incident context scaled
// by a Gaussian profile over the forecast horizon, and the prediction head.

#include <cmath>

#include "igstf/config.hpp"
#include "igstf/layers.hpp"

namespace igstf {

inline void init_tiid(Initializer& init, const HyperConfig& c) {
  init.mlp2("tiid.g_c", c.d_k + c.d_s + 3, c.mlp_hidden, c.d_v);
  init.weight("tiid.W_c", c.d_v, c.d_out);
  init.mlp2("tiid.g_out", c.d_out, c.mlp_hidden, 1);
}

/// omega[tau - 1] = exp(-tau^2 / (2 sigma_t^2)) for tau = 1..T_p.
inline Tensor decay_weights(std::size_t horizon, double sigma_t) {
  if (horizon == 0) throw ConfigError("decay_weights: horizon must be >= 1");
  if (!(sigma_t > 0.0)) throw ConfigError("decay_weights: sigma_t must be > 0");
  Tensor w({horizon});
  for (std::size_t i = 0; i < horizon; ++i) {
    const double tau = static_cast<double>(i + 1);
    w[i] = std::exp(-(tau * tau) / (2.0 * sigma_t * sigma_t));
  }
  return w;
}

/// C_init[j] = sum over connected k of g_c([K_k, S_j, D_kj]): N x d_v.
/// Zero rows for sensors without a connected incident; zero for M = 0.
inline Var initial_context(Tape& t, const ParamStore& p, Var K, Var S, Var D, const Tensor& connected,
                           std::size_t d_v) {
  const std::size_t m = K.dim(0), n = S.dim(0), dk = K.dim(1), ds = S.dim(1);
  if (m == 0) return t.constant(Tensor({n, d_v}));
  Var W1 = t.param(p, "tiid.g_c.W1");
  Var h = add(add(tile_over_sensors(matmul(K, slice(W1, 0, 0, dk)), n),
                  tile_over_incidents(matmul(S, slice(W1, 0, dk, dk + ds)), m)),
              linear(D, slice(W1, 0, dk + ds, dk + ds + 3)));
  h = relu(add_bias(h, t.param(p, "tiid.g_c.b1")));
  Var out = linear(h, t.param(p, "tiid.g_c.W2"), t.param(p, "tiid.g_c.b2"));  // M x N x d_v
  Tensor mask({m, n, d_v});
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < n; ++j)
      if (connected.at(k, j) != 0.0) std::fill_n(mask.ptr() + (k * n + j) * d_v, d_v, 1.0);
  return sum_leading(mul_const(out, mask));
}

/// C_temp[tau] = omega[tau] * (C_init W_c): T_p x N x d_out.
inline Var temporal_impact(Tape& t, const ParamStore& p, Var C_init, const Tensor& omega) {
  Var cw = matmul(C_init, t.param(p, "tiid.W_c"));
  const std::size_t n = cw.dim(0), d = cw.dim(1), horizon = omega.size();
  Var w = t.constant(omega.reshaped({horizon, 1}));
  return reshape(matmul(w, reshape(cw, {1, n * d})), {horizon, n, d});
}

/// Y = g_out(H_pred + C_temp): T_p x N x 1. Without C_temp this is the
/// incident-free path.
inline Var predict(Tape& t, const ParamStore& p, Var H_pred, std::optional<Var> C_temp = std::nullopt) {
  return mlp2(t, p, "tiid.g_out", C_temp ? add(H_pred, *C_temp) : H_pred);
}

}  // namespace igstf
