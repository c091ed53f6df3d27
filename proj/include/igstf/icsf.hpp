#pragma once

// Incident-context spatial fusion: masked cross-attention from sensors to the
// incidents that occur at the anchor step, plus the pooled-MLP and bipartite
// message-passing alternatives.

#include <cmath>
#include <string>

#include "igstf/config.hpp"
#include "igstf/layers.hpp"

namespace igstf {

struct AttentionPack {
  Var Q;  // N x d_k
  Var K;  // M x d_k
  Var V;  // M x d_v
};

inline void init_icsf(Initializer& init, const HyperConfig& c) {
  init.weight("icsf.W_Q", c.d_h, c.d_k);
  init.weight("icsf.W_K", c.d_e, c.d_k);
  init.weight("icsf.W_V", c.d_e, c.d_v);
  init.mlp2("icsf.g_alpha", 1 + c.d_s + 3, c.mlp_hidden, 1);
  if (c.d_v != c.d_h) init.weight("icsf.W_o", c.d_v, c.d_h);
  init.layer_norm("icsf.ln", c.d_h);
}

inline Var incident_keys(Tape& t, const ParamStore& p, Var I) { return matmul(I, t.param(p, "icsf.W_K")); }

inline AttentionPack project_qkv(Tape& t, const ParamStore& p, Var H_t, Var I) {
  return {matmul(H_t, t.param(p, "icsf.W_Q")), incident_keys(t, p, I), matmul(I, t.param(p, "icsf.W_V"))};
}

/// A_sem = K Q^T / sqrt(d_k): M x N.
inline Var semantic_scores(const AttentionPack& pack) {
  const double d_k = static_cast<double>(pack.Q.dim(1));
  return scale(matmul(pack.K, transpose(pack.Q)), 1.0 / std::sqrt(d_k));
}

/// Softmax over incidents for every sensor; columns without a connected
/// incident become zero.
inline Var preliminary_weights(Var masked_scores) { return softmax(masked_scores, 0); }

/// alpha = softmax_k(mask(g_alpha([prelim_kj, S_j, D_kj]))). The first layer
/// of g_alpha is split by input block so the per-pair concatenation is never
/// materialized.
inline Var fuse_context_weights(Tape& t, const ParamStore& p, Var prelim, Var S, Var D, const Tensor& connected) {
  const std::size_t m = prelim.dim(0), n = prelim.dim(1), ds = S.dim(1);
  Var W1 = t.param(p, "icsf.g_alpha.W1");
  Var w_prelim = slice(W1, 0, 0, 1);
  Var w_s = slice(W1, 0, 1, 1 + ds);
  Var w_d = slice(W1, 0, 1 + ds, ds + 4);
  Var h = add(add(linear(reshape(prelim, {m, n, 1}), w_prelim), tile_over_incidents(matmul(S, w_s), m)),
              linear(D, w_d));
  h = relu(add_bias(h, t.param(p, "icsf.g_alpha.b1")));
  Var logits = reshape(linear(h, t.param(p, "icsf.g_alpha.W2"), t.param(p, "icsf.g_alpha.b2")), {m, n});
  return softmax(apply_mask(logits, connected), 0);
}

/// C = alpha^T V: N x d_v.
inline Var aggregate_context(Var alpha, Var V) { return matmul(transpose(alpha), V); }

/// H'_t = LayerNorm(H_t + C), with C mapped to d_h first when d_v differs.
inline Var residual_fuse(Tape& t, const ParamStore& p, Var H_t, Var C) {
  if (C.dim(1) != H_t.dim(1)) C = matmul(C, t.param(p, "icsf.W_o"));
  return layer_norm_layer(t, p, "icsf.ln", add(H_t, C));
}

/// Replaces the last step of H by the fused state; earlier steps are copied.
inline Var replace_last_step(Var H, Var H_t_new) {
  const std::size_t steps = H.dim(0), n = H.dim(1), d = H.dim(2);
  Var last = reshape(H_t_new, {1, n, d});
  if (steps == 1) return last;
  return concat({slice(H, 0, 0, steps - 1), last}, 0);
}

/// Intermediate values of one fusion pass, for inspection and tests.
struct IcsfTrace {
  Tensor prelim, alpha, context;
};

/// Fused last-step state (N x d_h). Requires M >= 1.
inline Var icsf_last_step(Tape& t, const ParamStore& p, Var H_t, Var I, Var S, Var D, const Tensor& connected,
                          IcsfTrace* trace = nullptr) {
  AttentionPack pack = project_qkv(t, p, H_t, I);
  Var prelim = preliminary_weights(apply_mask(semantic_scores(pack), connected));
  Var alpha = fuse_context_weights(t, p, prelim, S, D, connected);
  Var C = aggregate_context(alpha, pack.V);
  if (trace) *trace = {prelim.value(), alpha.value(), C.value()};
  return residual_fuse(t, p, H_t, C);
}

inline Var icsf_forward(Tape& t, const ParamStore& p, Var H, Var I, Var S, Var D, const Tensor& connected,
                        IcsfTrace* trace = nullptr) {
  if (I.dim(0) == 0) return H;
  return replace_last_step(H, icsf_last_step(t, p, last_step(H), I, S, D, connected, trace));
}

// ------------------------------------------------------------------- pooled MLP fusion

inline void init_fuse_mlp(Initializer& init, const HyperConfig& c) {
  init.mlp2("fuse_mlp.mlp", c.d_h + c.d_s + c.d_e, c.mlp_hidden, c.d_h);
  init.layer_norm("fuse_mlp.ln", c.d_h);
}

/// Per sensor: mean of connected incident encodings (zero if none),
/// concatenated with H_t and S, through a perceptron, residual + LayerNorm.
inline Var fuse_mlp(Tape& t, const ParamStore& p, Var H_t, Var I, Var S, const Tensor& connected) {
  const std::size_t m = I.dim(0), n = H_t.dim(0);
  Tensor pool({n, m});
  for (std::size_t j = 0; j < n; ++j) {
    double cnt = 0.0;
    for (std::size_t k = 0; k < m; ++k) cnt += connected.at(k, j);
    for (std::size_t k = 0; k < m; ++k) pool.at(j, k) = cnt > 0.0 ? connected.at(k, j) / cnt : 0.0;
  }
  Var pooled = matmul(t.constant(std::move(pool)), I);
  Var delta = mlp2(t, p, "fuse_mlp.mlp", concat({H_t, S, pooled}, 1));
  return layer_norm_layer(t, p, "fuse_mlp.ln", add(H_t, delta));
}

// ------------------------------------------------------------------- message passing fusion

inline void init_fuse_imp(Initializer& init, const HyperConfig& c) {
  init.weight("fuse_imp.W_u", c.d_e, c.d_h);
  init.linear("fuse_imp.to_sensor", c.d_h, c.d_h);
  init.linear("fuse_imp.to_incident", c.d_h, c.d_h);
  init.layer_norm("fuse_imp.ln", c.d_h);
}

/// Pair weights for message passing: road score on connected pairs, else 0.
inline Tensor message_weights(const Tensor& D, const Tensor& connected) {
  const std::size_t m = connected.dim(0), n = connected.dim(1);
  Tensor w({m, n});
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < n; ++j) w.at(k, j) = connected.at(k, j) * D.at(k, j, 1);
  return w;
}

/// Bipartite rounds: sensors gather sum_k w_kj tanh(u_k W_s + b_s), then
/// incidents gather sum_j w_kj tanh(h_j W_e + b_e). Returns LN(final state).
inline Var fuse_imp(Tape& t, const ParamStore& p, Var H_t, Var I, const Tensor& weights, std::size_t rounds) {
  Var w = t.constant(weights);   // M x N
  Var wt = transpose(w);         // N x M
  Var u = matmul(I, t.param(p, "fuse_imp.W_u"));
  Var h = H_t;
  for (std::size_t r = 0; r < rounds; ++r) {
    Var to_sensor = tanh(linear_layer(t, p, "fuse_imp.to_sensor", u));
    Var h_next = add(h, matmul(wt, to_sensor));
    if (r + 1 < rounds) {
      Var to_incident = tanh(linear_layer(t, p, "fuse_imp.to_incident", h));
      u = add(u, matmul(w, to_incident));
    }
    h = h_next;
  }
  return layer_norm_layer(t, p, "fuse_imp.ln", h);
}

}  // namespace igstf
