#pragma once

// Run configuration: every knob with its default, JSON (de)serialization and
// validation. Unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "igstf/errors.hpp"

namespace igstf {

struct SynthConfig {
  std::size_t nodes = 20;
  std::size_t days = 10;
  double base_flow = 200.0;        // mean flow, also the noise reference amplitude
  double daily_depth = 0.5;        // relative amplitude of the daily sinusoid
  double weekend_factor = 0.8;     // multiplier on Saturdays and Sundays
  double noise_std = 0.02;         // fraction of base_flow
  double incidents_per_day = 4.0;
  double impact_peak = 0.5;        // delta
  double spatial_spread_km = 2.0;  // sigma_s
  std::size_t recovery_steps = 12; // R
  double downstream_gate = 0.2;
  std::string freeway = "I-880";
  double origin_lat = 37.60;
  double origin_lon = -122.06;
  std::string start = "2023-01-02T00:00:00Z";
  std::uint64_t seed = 0;
};

struct DataConfig {
  std::string input_dir;                // raw inputs; empty means <output_dir>/raw
  double adjacency_bandwidth_km = 0.0;  // 0 = standard deviation of sensor distances
  double adjacency_threshold = 0.1;
  double euclidean_bandwidth_km = 0.0;  // 0 = standard deviation over the training portion
  double road_bandwidth_km = 0.0;
  double train_ratio = 0.70, val_ratio = 0.15, test_ratio = 0.15;
  SynthConfig synth;
};

enum class FusionMode { Icsf, Mlp, Imp };

inline std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::Icsf: return "icsf";
    case FusionMode::Mlp: return "mlp";
    case FusionMode::Imp: return "imp";
  }
  return "icsf";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "icsf") return FusionMode::Icsf;
  if (s == "mlp") return FusionMode::Mlp;
  if (s == "imp") return FusionMode::Imp;
  throw ConfigError("fusion must be one of icsf, mlp, imp (got '" + s + "')");
}

struct HyperConfig {
  std::size_t T_h = 12, T_p = 12;
  std::size_t d_h = 64, d_k = 64, d_v = 64, d_s = 32, d_e = 48, d_emb = 12, d_out = 64;
  std::size_t d_dyn = 0;  // 0 = d_h + 2 * d_emb
  std::size_t d_att = 0;  // query/key width of the temporal attention; 0 = d_h
  std::size_t layers = 5;
  std::size_t diffusion_order = 2;
  std::size_t mlp_hidden = 32;
  std::size_t sensor_cat_dim = 4;
  std::size_t type_emb_dim = 8, desc_emb_dim = 32;
  double sigma_t = 1.0;
  double kappa = 0.05;
  FusionMode fusion = FusionMode::Icsf;
  std::size_t imp_rounds = 2;
  bool icsf_enabled = true, tiid_enabled = true;
  bool use_S = true, use_D = true, use_I = true;

  std::size_t dyn_width() const { return d_dyn ? d_dyn : d_h + 2 * d_emb; }
  std::size_t att_width() const { return d_att ? d_att : d_h; }
};

struct TrainConfig {
  double lr = 0.002;
  std::size_t batch_size = 48;
  std::size_t patience = 20;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t threads = 1;
  // Share of incident-free training instances drawn each epoch; instances
  // with incidents are always kept.
  double incident_free_fraction = 1.0;
};

inline const std::vector<std::string> kAblationVariants = {"full", "wo_icsf", "wo_tiid", "wo_S", "wo_D", "wo_I"};

struct AblationConfig {
  std::vector<std::string> variants = kAblationVariants;
};

struct EvalConfig {
  long plot_node = -1;  // -1 = sensor nearest to the first incident of the test split
};

struct RunConfig {
  DataConfig data;
  HyperConfig model;
  TrainConfig train;
  AblationConfig ablation;
  EvalConfig eval;
  std::string output_dir = "igstf_out";
};

/// Applies a named variant on top of a base model config.
inline HyperConfig apply_variant(HyperConfig m, const std::string& variant) {
  if (variant == "full") return m;
  if (variant == "wo_icsf") m.icsf_enabled = false;
  else if (variant == "wo_tiid") m.tiid_enabled = false;
  else if (variant == "wo_S") m.use_S = false;
  else if (variant == "wo_D") m.use_D = false;
  else if (variant == "wo_I") m.use_I = false;
  else throw ConfigError("unknown ablation variant '" + variant + "'");
  return m;
}

// ------------------------------------------------------------------- JSON

namespace detail {

using json = nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
    for (auto it = j_.begin(); it != j_.end(); ++it) unseen_.push_back(it.key());
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    mark(key);
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError("bad value for " + path_ + "." + key);
    }
  }

  const json* section(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    mark(key);
    return &*it;
  }

  std::string sub(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    if (!unseen_.empty()) {
      throw ConfigError("unknown key '" + (path_.empty() ? unseen_.front() : path_ + "." + unseen_.front()) + "'");
    }
  }

 private:
  void mark(const char* key) { std::erase(unseen_, std::string(key)); }
  const json& j_;
  std::string path_;
  std::vector<std::string> unseen_;
};

}  // namespace detail

inline void validate(const RunConfig& c) {
  const auto& m = c.model;
  for (std::size_t v : {m.T_h, m.T_p, m.d_h, m.d_k, m.d_v, m.d_s, m.d_e, m.d_emb, m.d_out, m.layers,
                        m.diffusion_order, m.mlp_hidden, m.sensor_cat_dim, m.type_emb_dim, m.desc_emb_dim,
                        m.imp_rounds}) {
    if (v == 0) throw ConfigError("model dimensions, lengths and counts must be >= 1");
  }
  if (!(m.sigma_t > 0.0)) throw ConfigError("model.sigma_t must be > 0");
  if (!(m.kappa > 0.0 && m.kappa <= 1.0)) throw ConfigError("model.kappa must lie in (0, 1]");
  const auto& t = c.train;
  if (!(t.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (t.batch_size == 0 || t.max_epochs == 0 || t.threads == 0) {
    throw ConfigError("train.batch_size, train.max_epochs and train.threads must be >= 1");
  }
  if (!(t.clip_norm > 0.0)) throw ConfigError("train.clip_norm must be > 0");
  if (!(t.beta1 >= 0.0 && t.beta1 < 1.0 && t.beta2 >= 0.0 && t.beta2 < 1.0 && t.adam_eps > 0.0)) {
    throw ConfigError("train Adam constants out of range");
  }
  if (!(t.incident_free_fraction > 0.0 && t.incident_free_fraction <= 1.0)) {
    throw ConfigError("train.incident_free_fraction must lie in (0, 1]");
  }
  const auto& d = c.data;
  if (d.adjacency_bandwidth_km < 0.0 || d.euclidean_bandwidth_km < 0.0 || d.road_bandwidth_km < 0.0) {
    throw ConfigError("data bandwidths must be >= 0 (0 selects the default)");
  }
  if (!(d.adjacency_threshold >= 0.0 && d.adjacency_threshold < 1.0)) {
    throw ConfigError("data.adjacency_threshold must lie in [0, 1)");
  }
  const auto& s = d.synth;
  if (s.nodes < 2 || s.days == 0 || !(s.base_flow > 0.0) || !(s.daily_depth >= 0.0 && s.daily_depth < 1.0) ||
      !(s.weekend_factor > 0.0) || s.noise_std < 0.0 || s.incidents_per_day < 0.0 ||
      !(s.impact_peak >= 0.0 && s.impact_peak <= 1.0) || !(s.spatial_spread_km > 0.0) ||
      s.recovery_steps == 0 || s.recovery_steps > 48 || !(s.downstream_gate >= 0.0 && s.downstream_gate <= 1.0)) {
    throw ConfigError("data.synth values out of range");
  }
  for (const auto& v : c.ablation.variants) (void)apply_variant(m, v);
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::Reader root(j, "");
  if (const auto* s = root.section("data")) {
    detail::Reader r(*s, "data");
    auto& d = c.data;
    r.get("input_dir", d.input_dir);
    r.get("adjacency_bandwidth_km", d.adjacency_bandwidth_km);
    r.get("adjacency_threshold", d.adjacency_threshold);
    r.get("euclidean_bandwidth_km", d.euclidean_bandwidth_km);
    r.get("road_bandwidth_km", d.road_bandwidth_km);
    r.get("train_ratio", d.train_ratio);
    r.get("val_ratio", d.val_ratio);
    r.get("test_ratio", d.test_ratio);
    if (const auto* ss = r.section("synth")) {
      detail::Reader q(*ss, "data.synth");
      auto& y = d.synth;
      q.get("nodes", y.nodes);
      q.get("days", y.days);
      q.get("base_flow", y.base_flow);
      q.get("daily_depth", y.daily_depth);
      q.get("weekend_factor", y.weekend_factor);
      q.get("noise_std", y.noise_std);
      q.get("incidents_per_day", y.incidents_per_day);
      q.get("impact_peak", y.impact_peak);
      q.get("spatial_spread_km", y.spatial_spread_km);
      q.get("recovery_steps", y.recovery_steps);
      q.get("downstream_gate", y.downstream_gate);
      q.get("freeway", y.freeway);
      q.get("origin_lat", y.origin_lat);
      q.get("origin_lon", y.origin_lon);
      q.get("start", y.start);
      q.get("seed", y.seed);
      q.finish();
    }
    r.finish();
  }
  if (const auto* s = root.section("model")) {
    detail::Reader r(*s, "model");
    auto& m = c.model;
    r.get("T_h", m.T_h);
    r.get("T_p", m.T_p);
    r.get("d_h", m.d_h);
    r.get("d_k", m.d_k);
    r.get("d_v", m.d_v);
    r.get("d_s", m.d_s);
    r.get("d_e", m.d_e);
    r.get("d_emb", m.d_emb);
    r.get("d_out", m.d_out);
    r.get("d_dyn", m.d_dyn);
    r.get("d_att", m.d_att);
    r.get("L", m.layers);
    r.get("P", m.diffusion_order);
    r.get("mlp_hidden", m.mlp_hidden);
    r.get("sensor_cat_dim", m.sensor_cat_dim);
    r.get("type_emb_dim", m.type_emb_dim);
    r.get("desc_emb_dim", m.desc_emb_dim);
    r.get("sigma_t", m.sigma_t);
    r.get("kappa", m.kappa);
    std::string fusion = to_string(m.fusion);
    r.get("fusion", fusion);
    m.fusion = parse_fusion_mode(fusion);
    r.get("imp_rounds", m.imp_rounds);
    r.get("icsf_enabled", m.icsf_enabled);
    r.get("tiid_enabled", m.tiid_enabled);
    r.get("use_S", m.use_S);
    r.get("use_D", m.use_D);
    r.get("use_I", m.use_I);
    r.finish();
  }
  if (const auto* s = root.section("train")) {
    detail::Reader r(*s, "train");
    auto& t = c.train;
    r.get("lr", t.lr);
    r.get("batch_size", t.batch_size);
    r.get("patience", t.patience);
    r.get("max_epochs", t.max_epochs);
    r.get("seed", t.seed);
    r.get("clip_norm", t.clip_norm);
    r.get("beta1", t.beta1);
    r.get("beta2", t.beta2);
    r.get("adam_eps", t.adam_eps);
    r.get("threads", t.threads);
    r.get("incident_free_fraction", t.incident_free_fraction);
    r.finish();
  }
  if (const auto* s = root.section("ablation")) {
    detail::Reader r(*s, "ablation");
    r.get("variants", c.ablation.variants);
    r.finish();
  }
  if (const auto* s = root.section("eval")) {
    detail::Reader r(*s, "eval");
    r.get("plot_node", c.eval.plot_node);
    r.finish();
  }
  root.get("output_dir", c.output_dir);
  root.finish();
  validate(c);
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& d = c.data;
  const auto& y = d.synth;
  const auto& m = c.model;
  const auto& t = c.train;
  return {
      {"data",
       {{"input_dir", d.input_dir},
        {"adjacency_bandwidth_km", d.adjacency_bandwidth_km},
        {"adjacency_threshold", d.adjacency_threshold},
        {"euclidean_bandwidth_km", d.euclidean_bandwidth_km},
        {"road_bandwidth_km", d.road_bandwidth_km},
        {"train_ratio", d.train_ratio},
        {"val_ratio", d.val_ratio},
        {"test_ratio", d.test_ratio},
        {"synth",
         {{"nodes", y.nodes},
          {"days", y.days},
          {"base_flow", y.base_flow},
          {"daily_depth", y.daily_depth},
          {"weekend_factor", y.weekend_factor},
          {"noise_std", y.noise_std},
          {"incidents_per_day", y.incidents_per_day},
          {"impact_peak", y.impact_peak},
          {"spatial_spread_km", y.spatial_spread_km},
          {"recovery_steps", y.recovery_steps},
          {"downstream_gate", y.downstream_gate},
          {"freeway", y.freeway},
          {"origin_lat", y.origin_lat},
          {"origin_lon", y.origin_lon},
          {"start", y.start},
          {"seed", y.seed}}}}},
      {"model",
       {{"T_h", m.T_h},
        {"T_p", m.T_p},
        {"d_h", m.d_h},
        {"d_k", m.d_k},
        {"d_v", m.d_v},
        {"d_s", m.d_s},
        {"d_e", m.d_e},
        {"d_emb", m.d_emb},
        {"d_out", m.d_out},
        {"d_dyn", m.d_dyn},
        {"d_att", m.d_att},
        {"L", m.layers},
        {"P", m.diffusion_order},
        {"mlp_hidden", m.mlp_hidden},
        {"sensor_cat_dim", m.sensor_cat_dim},
        {"type_emb_dim", m.type_emb_dim},
        {"desc_emb_dim", m.desc_emb_dim},
        {"sigma_t", m.sigma_t},
        {"kappa", m.kappa},
        {"fusion", to_string(m.fusion)},
        {"imp_rounds", m.imp_rounds},
        {"icsf_enabled", m.icsf_enabled},
        {"tiid_enabled", m.tiid_enabled},
        {"use_S", m.use_S},
        {"use_D", m.use_D},
        {"use_I", m.use_I}}},
      {"train",
       {{"lr", t.lr},
        {"batch_size", t.batch_size},
        {"patience", t.patience},
        {"max_epochs", t.max_epochs},
        {"seed", t.seed},
        {"clip_norm", t.clip_norm},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_eps", t.adam_eps},
        {"threads", t.threads},
        {"incident_free_fraction", t.incident_free_fraction}}},
      {"ablation", {{"variants", c.ablation.variants}}},
      {"eval", {{"plot_node", c.eval.plot_node}}},
      {"output_dir", c.output_dir},
  };
}

}  // namespace igstf
