#pragma once

// A small end-to-end problem built through the real data pipeline, and the
// per-module gradient checks run on it.

#include <string>
#include <vector>

#include "igstf/gradcheck.hpp"
#include "igstf/model.hpp"

namespace igstf {

struct ToyProblem {
  HyperConfig cfg;
  std::vector<SensorMeta> sensors;
  std::vector<IncidentRecord> incidents;
  SensorVocab vocab;
  ModelData data;
  PreparedInstance inst;
  ParamStore params;
};

inline HyperConfig toy_config(FusionMode fusion = FusionMode::Icsf) {
  HyperConfig c;
  c.T_h = c.T_p = 3;
  c.d_h = 6;
  c.d_k = 4;
  c.d_v = 5;
  c.d_s = 3;
  c.d_e = 5;
  c.d_emb = 2;
  c.d_out = 4;
  c.d_att = 3;
  c.layers = 2;
  c.diffusion_order = 2;
  c.mlp_hidden = 5;
  c.sensor_cat_dim = 2;
  c.type_emb_dim = 3;
  c.desc_emb_dim = 4;
  c.sigma_t = 1.5;
  c.fusion = fusion;
  return c;
}

/// Replaces every parameter by N(0, scale) draws (keeps ReLUs and
/// LayerNorm gains away from degenerate zero points).
inline void perturb_params(ParamStore& params, std::uint64_t seed, double scale = 0.2) {
  Rng rng(seed);
  for (auto& [_, t] : params)
    for (double& v : t.storage()) v = rng.normal(0.0, scale);
}

/// N sensors 0.5 mi apart on one freeway; incidents at the anchor step, the
/// last one on another freeway so that it connects to no sensor. With a
/// 1 km road bandwidth the far sensors are disconnected from all incidents.
inline ToyProblem make_toy_problem(std::uint64_t seed, HyperConfig cfg, std::size_t nodes = 4,
                                   std::size_t incidents = 3) {
  Rng rng(derive_seed(seed, 7));
  ToyProblem tp;
  tp.cfg = cfg;
  for (std::size_t j = 0; j < nodes; ++j) {
    SensorMeta s;
    s.id = "S" + std::to_string(j);
    s.type = j % 2 ? "Mainline" : "Ramp";
    s.surface = j % 3 ? "Asphalt" : "Concrete";
    s.roadway_use = "Urban";
    s.lane_width = 3.4 + 0.1 * static_cast<double>(j);
    s.design_speed = 90 + 5 * static_cast<int>(j);
    s.freeway = "F";
    s.abs_pm = 0.5 * static_cast<double>(j);
    s.latitude = 37.6 + 0.00724 * static_cast<double>(j);
    s.longitude = -122.0;
    tp.sensors.push_back(s);
  }
  const TimePoint start = *parse_iso8601("2023-01-04T08:00:00Z");
  for (std::size_t k = 0; k < incidents; ++k) {
    IncidentRecord e;
    e.id = "E" + std::to_string(k);
    e.timestamp = start + std::chrono::seconds{static_cast<long>(cfg.T_h - 1) * kStepSeconds + 17};
    e.type = std::string(kIncidentTypes[rng.below(kIncidentTypes.size())]);
    e.description = std::string(kIncidentDescriptions[rng.below(kIncidentDescriptions.size())]);
    e.holiday = static_cast<int>(k % 2);
    e.freeway = (k + 1 == incidents && incidents > 1) ? "G" : "F";
    e.abs_pm = rng.uniform(0.0, 0.15);
    e.latitude = 37.6 + 0.0145 * e.abs_pm;
    e.longitude = -122.0;
    tp.incidents.push_back(e);
  }
  const std::size_t steps = cfg.T_h + cfg.T_p;
  Tensor flow({steps, nodes});
  for (double& v : flow.storage()) v = rng.uniform(60.0, 140.0);
  std::vector<std::string> ids;
  for (const auto& s : tp.sensors) ids.push_back(s.id);
  auto series = std::make_shared<const TrafficSeries>(TrafficSeries::from_flow(flow, start, ids));
  auto rel = build_relation_tensor(tp.incidents, tp.sensors, {1.0, 1.0});
  auto inst = make_instances(series, align_incidents(tp.incidents, *series), tp.incidents, rel, cfg.T_h, cfg.T_p);

  tp.vocab = SensorVocab::discover(tp.sensors);
  tp.data.norm.sensor = SensorNumericStats::fit(tp.sensors);
  std::tie(tp.data.norm.flow_mean, tp.data.norm.flow_std) = fit_flow_stats(*series, 0, steps);
  tp.data.sensors = prepare_sensor_features(tp.sensors, tp.vocab, tp.data.norm.sensor);
  tp.data.A_static = build_adjacency(tp.sensors, 1.0).row_normalized();
  tp.inst = prepare_instance(inst.at(0), tp.data.norm, cfg.kappa);
  tp.params = init_model_params(cfg, tp.vocab, nodes, seed);
  perturb_params(tp.params, derive_seed(seed, 8));
  return tp;
}

struct ModuleGradCheck {
  std::string module;
  GradCheckReport report;
};

inline std::vector<std::string> names_with_prefix(const ParamStore& p, const std::string& prefix) {
  std::vector<std::string> out;
  for (const auto& [name, _] : p)
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  return out;
}

/// Central-difference checks of the standardized model output (reduced by a
/// fixed random weighted mean) for every module, in all three fusion modes.
inline std::vector<ModuleGradCheck> run_module_grad_checks(std::uint64_t seed, double h = 1e-5,
                                                           double tol = 1e-4) {
  std::vector<ModuleGradCheck> out;
  const auto run = [&](const ToyProblem& tp, const std::string& module, const std::string& prefix) {
    ScalarFn f = [&tp](Tape& t, const ParamStore& p) {
      return weighted_mean(model_forward_standardized(t, p, tp.cfg, tp.data, tp.inst), 1234);
    };
    out.push_back({module, grad_check(f, tp.params, names_with_prefix(tp.params, prefix), h, tol)});
  };
  ToyProblem icsf = make_toy_problem(seed, toy_config(FusionMode::Icsf));
  run(icsf, "encoders", "enc.");
  run(icsf, "icsf", "icsf.");
  run(icsf, "backbone", "bb.");
  run(icsf, "tiid", "tiid.");
  run(make_toy_problem(seed, toy_config(FusionMode::Mlp)), "fusion_mlp", "fuse_mlp.");
  run(make_toy_problem(seed, toy_config(FusionMode::Imp)), "fusion_imp", "fuse_imp.");
  return out;
}

}  // namespace igstf
