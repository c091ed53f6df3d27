#pragma once

// Full forecaster: encoders -> incident fusion at the anchor step ->
// decoupled backbone -> impact decay head, de-standardized to flow units.

#include <cmath>
#include <optional>
#include <vector>

#include "igstf/backbone.hpp"
#include "igstf/encoders.hpp"
#include "igstf/icsf.hpp"
#include "igstf/tiid.hpp"

namespace igstf {

/// Standardization constants fitted on the training split.
struct NormStats {
  double flow_mean = 0.0, flow_std = 1.0;
  SensorNumericStats sensor;
};

/// Flow mean / standard deviation over observed values in steps
/// [first_step, end_step).
inline std::pair<double, double> fit_flow_stats(const TrafficSeries& series, std::size_t first_step,
                                                std::size_t end_step) {
  double sum = 0.0, sq = 0.0;
  std::size_t cnt = 0;
  for (std::size_t t = first_step; t < end_step; ++t)
    for (std::size_t n = 0; n < series.nodes(); ++n)
      if (!series.missing(t, n)) {
        sum += series.flow(t, n);
        ++cnt;
      }
  if (cnt == 0) return {0.0, 1.0};
  const double mean = sum / static_cast<double>(cnt);
  for (std::size_t t = first_step; t < end_step; ++t)
    for (std::size_t n = 0; n < series.nodes(); ++n)
      if (!series.missing(t, n)) sq += (series.flow(t, n) - mean) * (series.flow(t, n) - mean);
  const double sd = std::sqrt(sq / static_cast<double>(cnt));
  return {mean, sd > 0.0 ? sd : 1.0};
}

/// Dataset-wide model inputs.
struct ModelData {
  SensorFeatures sensors;
  Tensor A_static;  // row-normalized road adjacency
  NormStats norm;

  std::size_t nodes() const { return sensors.count(); }
};

/// One forecast instance in model-ready form.
struct PreparedInstance {
  std::size_t anchor = 0;
  TimePoint anchor_time{};
  Tensor x;          // T_h x N x 3: standardized flow (missing -> 0), time of day, day of week / 7
  IncidentFeatures incidents;
  Tensor D;          // M x N x 3
  Tensor connected;  // M x N
  Tensor target;     // T_p x N x 1, flow units, 0 where missing
  Tensor mask;       // T_p x N x 1

  std::size_t incident_count() const { return incidents.count(); }
};

inline PreparedInstance prepare_instance(const ForecastInstance& inst, const NormStats& norm, double kappa) {
  PreparedInstance p;
  p.anchor = inst.anchor;
  p.anchor_time = inst.anchor_time;
  p.x = inst.history();
  const std::size_t rows = p.x.dim(0) * p.x.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double& f = p.x[r * kTrafficChannels + kFlowChannel];
    f = std::isnan(f) ? 0.0 : (f - norm.flow_mean) / norm.flow_std;
    p.x[r * kTrafficChannels + kDayOfWeekChannel] /= static_cast<double>(kDaysPerWeek);
  }
  p.incidents = prepare_incident_features(inst.incidents, inst.history_len);
  p.D = inst.relation.d;
  p.connected = inst.relation.connectivity(kappa);
  p.target = inst.target();
  p.mask = inst.target_mask();
  for (double& v : p.target.storage())
    if (std::isnan(v)) v = 0.0;
  return p;
}

inline ParamStore init_model_params(const HyperConfig& c, const SensorVocab& vocab, std::size_t nodes,
                                    std::uint64_t seed) {
  ParamStore p;
  Rng rng(derive_seed(seed, 1));
  Initializer init(p, rng);
  init_sensor_encoder(init, c, vocab);
  init_incident_encoder(init, c);
  init_traffic_encoder(init, c, kTrafficChannels);
  init_icsf(init, c);
  if (c.fusion == FusionMode::Mlp) init_fuse_mlp(init, c);
  if (c.fusion == FusionMode::Imp) init_fuse_imp(init, c);
  init_backbone(init, c, nodes);
  init_tiid(init, c);
  return p;
}

/// Intermediate results of one forward pass.
struct ForwardTrace {
  Tensor H, H_fused, A_ada, A_dyn, H_pred;
  std::optional<Tensor> C_init, C_temp;
  IcsfTrace icsf;
  std::vector<DecoupleBlockState> blocks;
};

/// Prediction in standardized flow units: T_p x N x 1.
inline Var model_forward_standardized(Tape& t, const ParamStore& p, const HyperConfig& c, const ModelData& data,
                         const PreparedInstance& inst, ForwardTrace* trace = nullptr) {
  const std::size_t n = data.nodes(), m = inst.incident_count();
  Var H = project_traffic(t, p, t.constant(inst.x));

  Var H_fused = H;
  std::optional<Var> I, S_in, D_in;
  if (m > 0) {
    I = encode_incidents(t, p, c, inst.incidents, c.use_I);
    S_in = c.use_S ? encode_sensors(t, p, data.sensors) : t.constant(Tensor({n, c.d_s}));
    D_in = t.constant(c.use_D ? inst.D : Tensor(inst.D.shape()));
    if (c.icsf_enabled) {
      switch (c.fusion) {
        case FusionMode::Icsf:
          H_fused = icsf_forward(t, p, H, *I, *S_in, *D_in, inst.connected, trace ? &trace->icsf : nullptr);
          break;
        case FusionMode::Mlp:
          H_fused = replace_last_step(H, fuse_mlp(t, p, last_step(H), *I, *S_in, inst.connected));
          break;
        case FusionMode::Imp: {
          const Tensor w = message_weights(D_in->value(), inst.connected);
          H_fused = replace_last_step(H, fuse_imp(t, p, last_step(H), *I, w, c.imp_rounds));
          break;
        }
      }
    }
  }

  TimeEmbeddings te = timestamp_embeddings(t, p, inst.anchor_time, n);
  Var E_dyn = concat({last_step(H_fused), te.tod, te.dow}, 1);
  AdjacencySet adj{t.constant(data.A_static), adaptive_adjacency(t.param(p, "bb.E_u"), t.param(p, "bb.E_d")),
                   dynamic_adjacency(t, p, E_dyn)};
  Var H_pred = backbone_forward(t, p, H_fused, adj, c, trace ? &trace->blocks : nullptr);

  std::optional<Var> C_temp;
  if (c.tiid_enabled && m > 0) {
    Var C_init = initial_context(t, p, incident_keys(t, p, *I), *S_in, *D_in, inst.connected, c.d_v);
    C_temp = temporal_impact(t, p, C_init, decay_weights(c.T_p, c.sigma_t));
    if (trace) trace->C_init = C_init.value();
  }
  Var y = predict(t, p, H_pred, C_temp);

  if (trace) {
    trace->H = H.value();
    trace->H_fused = H_fused.value();
    trace->A_ada = adj.A_ada.value();
    trace->A_dyn = adj.A_dyn.value();
    trace->H_pred = H_pred.value();
    if (C_temp) trace->C_temp = C_temp->value();
  }
  return y;
}

/// Prediction in flow units: T_p x N x 1.
inline Var model_forward(Tape& t, const ParamStore& p, const HyperConfig& c, const ModelData& data,
                         const PreparedInstance& inst, ForwardTrace* trace = nullptr) {
  Var y = model_forward_standardized(t, p, c, data, inst, trace);
  return add(scale(y, data.norm.flow_std), t.constant(Tensor(y.shape(), data.norm.flow_mean)));
}

}  // namespace igstf
