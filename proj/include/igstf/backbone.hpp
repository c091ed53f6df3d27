#pragma once

// Decoupled spatio-temporal backbone: static / adaptive / dynamic adjacencies,
// multi-graph diffusion, and blocks that split each layer's input into an
// externally propagated part and an inherent temporal trend.

#include <cmath>
#include <string>
#include <vector>

#include "igstf/config.hpp"
#include "igstf/layers.hpp"

namespace igstf {

struct AdjacencySet {
  Var A_static, A_ada, A_dyn;  // each N x N, row-stochastic (static: where nonzero)
};

inline std::string layer_prefix(std::size_t l) { return "bb.l" + std::to_string(l); }

inline void init_backbone(Initializer& init, const HyperConfig& c, std::size_t nodes) {
  const std::size_t d = c.d_h, dyn = c.dyn_width(), att = c.att_width();
  // Node embeddings feed a softmax through ReLU(E_u E_d^T); a unit-scale
  // start keeps the initial adaptive graph from being uniform.
  init.embedding("bb.E_u", nodes, c.d_emb, 1.0 / std::sqrt(static_cast<double>(c.d_emb)));
  init.embedding("bb.E_d", nodes, c.d_emb, 1.0 / std::sqrt(static_cast<double>(c.d_emb)));
  init.weight("bb.dyn.W_Q", dyn, dyn);
  init.weight("bb.dyn.W_K", dyn, dyn);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string pre = layer_prefix(l);
    init.linear(pre + ".conv", (1 + 3 * c.diffusion_order) * d, d);
    init.weight(pre + ".gru.W", d, 3 * d);
    init.weight(pre + ".gru.U", d, 3 * d);
    init.zeros(pre + ".gru.b", {3 * d});
    init.weight(pre + ".att.W_q", d, att);
    init.weight(pre + ".att.W_k", d, att);
    init.weight(pre + ".att.W_v", d, d);
    init.linear(pre + ".head_ext", d, c.T_p * c.d_out);
    init.linear(pre + ".head_inh", d, c.T_p * c.d_out);
  }
}

/// softmax(ReLU(E_u E_d^T)) row-wise.
inline Var adaptive_adjacency(Var E_u, Var E_d) { return softmax(relu(matmul(E_u, transpose(E_d))), 1); }

/// softmax((E W_Q)(E W_K)^T / sqrt(d_dyn)) row-wise.
inline Var dynamic_adjacency(Tape& t, const ParamStore& p, Var E_dyn) {
  Var q = matmul(E_dyn, t.param(p, "bb.dyn.W_Q"));
  Var k = matmul(E_dyn, t.param(p, "bb.dyn.W_K"));
  const double d = static_cast<double>(E_dyn.dim(1));
  return softmax(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(d)), 1);
}

/// A applied to every step: [T x N x d] -> [T x N x d].
inline Var graph_propagate(Var A, Var H) {
  const std::size_t steps = H.dim(0), n = H.dim(1), d = H.dim(2);
  Var flat = reshape(swap01(H), {n, steps * d});
  return swap01(reshape(matmul(A, flat), {n, steps, d}));
}

/// [H, A_s H, A_s^2 H, ..., A_a H, ..., A_d^P H] along the feature axis.
inline Var diffusion_features(Var H, const AdjacencySet& adj, std::size_t order) {
  std::vector<Var> parts{H};
  for (Var A : {adj.A_static, adj.A_ada, adj.A_dyn}) {
    Var cur = H;
    for (std::size_t k = 0; k < order; ++k) {
      cur = graph_propagate(A, cur);
      parts.push_back(cur);
    }
  }
  return concat(parts, 2);
}

/// Z = H W_0 + sum over adjacencies and powers p of A^p H W_{A,p} (+ bias),
/// with the weights stacked row-block-wise in one matrix.
inline Var multigraph_conv(Tape& t, const ParamStore& p, const std::string& prefix, Var H, const AdjacencySet& adj,
                           std::size_t order) {
  return linear_layer(t, p, prefix, diffusion_features(H, adj, order));
}

/// [N x d] -> [T_p x N x d_out] through a linear head.
inline Var forecast_head(Tape& t, const ParamStore& p, const std::string& prefix, Var last, std::size_t horizon) {
  const std::size_t n = last.dim(0);
  Var y = linear_layer(t, p, prefix, last);
  const std::size_t d_out = y.dim(1) / horizon;
  return swap01(reshape(y, {n, horizon, d_out}));
}

struct ComponentOutput {
  Var hidden;    // T_h x N x d_h
  Var forecast;  // T_p x N x d_out
};

inline ComponentOutput external_influence(Tape& t, const ParamStore& p, std::size_t layer, Var H_in,
                                          const AdjacencySet& adj, const HyperConfig& c) {
  const std::string pre = layer_prefix(layer);
  Var H_ext = multigraph_conv(t, p, pre + ".conv", H_in, adj, c.diffusion_order);
  return {H_ext, forecast_head(t, p, pre + ".head_ext", last_step(H_ext), c.T_p)};
}

/// Gated recurrent scan per node (h_0 = 0), then single-head scaled
/// dot-product self-attention across the scanned steps of each node.
inline ComponentOutput inherent_trend(Tape& t, const ParamStore& p, std::size_t layer, Var H_res,
                                      const HyperConfig& c) {
  const std::string pre = layer_prefix(layer);
  const std::size_t steps = H_res.dim(0), n = H_res.dim(1), d = H_res.dim(2);
  Var xw = add_bias(linear(H_res, t.param(p, pre + ".gru.W")), t.param(p, pre + ".gru.b"));  // T x N x 3d
  Var U = t.param(p, pre + ".gru.U");
  Var h = t.constant(Tensor({n, d}));
  std::vector<Var> outs;
  outs.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    Var x = reshape(slice(xw, 0, s, s + 1), {n, 3 * d});
    Var hu = matmul(h, U);
    Var z = sigmoid(add(slice(x, 1, 0, d), slice(hu, 1, 0, d)));
    Var r = sigmoid(add(slice(x, 1, d, 2 * d), slice(hu, 1, d, 2 * d)));
    Var cand = tanh(add(slice(x, 1, 2 * d, 3 * d), mul(r, slice(hu, 1, 2 * d, 3 * d))));
    h = add(cand, mul(z, sub(h, cand)));  // (1 - z) * cand + z * h
    outs.push_back(reshape(h, {n, 1, d}));
  }
  Var G = steps == 1 ? outs[0] : concat(outs, 1);  // N x T x d
  Var q = linear(G, t.param(p, pre + ".att.W_q"));
  Var k = linear(G, t.param(p, pre + ".att.W_k"));
  Var v = linear(G, t.param(p, pre + ".att.W_v"));
  const double scale_f = 1.0 / std::sqrt(static_cast<double>(q.dim(2)));
  Var att = softmax(scale(bmm(q, swap12(k)), scale_f), 2);  // N x T x T
  Var out = bmm(att, v);                                    // N x T x d
  Var H_inh = swap01(out);
  return {H_inh, forecast_head(t, p, pre + ".head_inh", last_step(H_inh), c.T_p)};
}

/// Per-layer values, recorded when a trace is requested.
struct DecoupleBlockState {
  Tensor H_in, H_ext, H_res, H_inh, H_out;
};

/// Runs the L blocks and returns H_pred = sum over layers of both forecast parts.
inline Var backbone_forward(Tape& t, const ParamStore& p, Var H, const AdjacencySet& adj, const HyperConfig& c,
                            std::vector<DecoupleBlockState>* trace = nullptr) {
  std::optional<Var> pred;
  for (std::size_t l = 0; l < c.layers; ++l) {
    ComponentOutput ext = external_influence(t, p, l, H, adj, c);
    Var H_res = sub(H, ext.hidden);
    ComponentOutput inh = inherent_trend(t, p, l, H_res, c);
    Var H_next = sub(H_res, inh.hidden);
    if (trace) trace->push_back({H.value(), ext.hidden.value(), H_res.value(), inh.hidden.value(), H_next.value()});
    Var part = add(ext.forecast, inh.forecast);
    pred = pred ? add(*pred, part) : part;
    H = H_next;
  }
  return *pred;
}

}  // namespace igstf
