#pragma once

// Feature encoders: sensor meta-features, incident records, the traffic
// projection and time-of-day / day-of-week embeddings.

#include <array>
#include <string>
#include <vector>

#include "igstf/config.hpp"
#include "igstf/datamodel.hpp"
#include "igstf/layers.hpp"

namespace igstf {

inline constexpr std::size_t kDaysPerWeek = 7;

// ------------------------------------------------------------------- sensors

/// Mean and standard deviation of the numeric sensor features.
struct SensorNumericStats {
  double lane_width_mean = 0.0, lane_width_std = 1.0;
  double design_speed_mean = 0.0, design_speed_std = 1.0;

  static SensorNumericStats fit(const std::vector<SensorMeta>& sensors) {
    std::vector<double> lw, ds;
    for (const auto& s : sensors) {
      lw.push_back(s.lane_width);
      ds.push_back(static_cast<double>(s.design_speed));
    }
    const auto mean = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m += x;
      return v.empty() ? 0.0 : m / static_cast<double>(v.size());
    };
    SensorNumericStats st;
    st.lane_width_mean = mean(lw);
    st.design_speed_mean = mean(ds);
    const double a = population_stddev(lw), b = population_stddev(ds);
    st.lane_width_std = a > 0.0 ? a : 1.0;
    st.design_speed_std = b > 0.0 ? b : 1.0;
    return st;
  }
};

/// Lookup indices and standardized numeric columns, fixed per dataset.
struct SensorFeatures {
  std::vector<std::size_t> type, surface, roadway_use;
  Tensor numeric;  // N x 2: lane_width, design_speed

  std::size_t count() const { return type.size(); }
};

inline SensorFeatures prepare_sensor_features(const std::vector<SensorMeta>& sensors, const SensorVocab& vocab,
                                              const SensorNumericStats& stats) {
  SensorFeatures f;
  f.numeric = Tensor({sensors.size(), 2});
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const auto& s = sensors[i];
    f.type.push_back(vocab.type.index(s.type, "sensor type"));
    f.surface.push_back(vocab.surface.index(s.surface, "sensor surface"));
    f.roadway_use.push_back(vocab.roadway_use.index(s.roadway_use, "sensor roadway_use"));
    f.numeric.at(i, 0) = (s.lane_width - stats.lane_width_mean) / stats.lane_width_std;
    f.numeric.at(i, 1) = (static_cast<double>(s.design_speed) - stats.design_speed_mean) / stats.design_speed_std;
  }
  return f;
}

inline void init_sensor_encoder(Initializer& init, const HyperConfig& c, const SensorVocab& vocab) {
  init.embedding("enc.sensor.type_emb", vocab.type.size(), c.sensor_cat_dim);
  init.embedding("enc.sensor.surface_emb", vocab.surface.size(), c.sensor_cat_dim);
  init.embedding("enc.sensor.use_emb", vocab.roadway_use.size(), c.sensor_cat_dim);
  init.mlp2("enc.sensor.mlp", 3 * c.sensor_cat_dim + 2, c.mlp_hidden, c.d_s);
}

/// S: N x d_s.
inline Var encode_sensors(Tape& t, const ParamStore& p, const SensorFeatures& f) {
  Var x = concat({gather_rows(t.param(p, "enc.sensor.type_emb"), f.type),
                  gather_rows(t.param(p, "enc.sensor.surface_emb"), f.surface),
                  gather_rows(t.param(p, "enc.sensor.use_emb"), f.roadway_use), t.constant(f.numeric)},
                 1);
  return mlp2(t, p, "enc.sensor.mlp", x);
}

// ------------------------------------------------------------------- incidents

struct IncidentFeatures {
  std::vector<std::size_t> type, description;
  Tensor scalars;  // M x 2: holiday bit, e1 / T_h

  std::size_t count() const { return type.size(); }
};

inline IncidentFeatures prepare_incident_features(const std::vector<IncidentRecord>& incidents,
                                                  std::size_t history_len) {
  IncidentFeatures f;
  f.scalars = Tensor({incidents.size(), 2});
  for (std::size_t k = 0; k < incidents.size(); ++k) {
    const auto& e = incidents[k];
    auto ti = incident_type_index(e.type);
    if (!ti) throw EncodingError("unknown incident type '" + e.type + "'");
    auto di = incident_description_index(e.description);
    if (!di) throw EncodingError("unknown incident description '" + e.description + "'");
    f.type.push_back(*ti);
    f.description.push_back(*di);
    f.scalars.at(k, 0) = static_cast<double>(e.holiday);
    f.scalars.at(k, 1) = static_cast<double>(e.relative_position) / static_cast<double>(history_len);
  }
  return f;
}

inline void init_incident_encoder(Initializer& init, const HyperConfig& c) {
  init.embedding("enc.incident.type_emb", kIncidentTypes.size(), c.type_emb_dim);
  init.embedding("enc.incident.desc_emb", kIncidentDescriptions.size(), c.desc_emb_dim);
  init.linear("enc.incident.proj", c.type_emb_dim + c.desc_emb_dim + 2, c.d_e);
}

/// I: M x d_e. With `use_embeddings` false the type and description
/// embeddings are replaced by zeros.
inline Var encode_incidents(Tape& t, const ParamStore& p, const HyperConfig& c, const IncidentFeatures& f,
                            bool use_embeddings = true) {
  const std::size_t m = f.count();
  if (m == 0) return t.constant(Tensor({0, c.d_e}));
  Var type = use_embeddings ? gather_rows(t.param(p, "enc.incident.type_emb"), f.type)
                            : t.constant(Tensor({m, c.type_emb_dim}));
  Var desc = use_embeddings ? gather_rows(t.param(p, "enc.incident.desc_emb"), f.description)
                            : t.constant(Tensor({m, c.desc_emb_dim}));
  return linear_layer(t, p, "enc.incident.proj", concat({type, desc, t.constant(f.scalars)}, 1));
}

// ------------------------------------------------------------------- traffic and time

inline void init_traffic_encoder(Initializer& init, const HyperConfig& c, std::size_t channels) {
  init.linear("enc.traffic", channels, c.d_h);
  init.embedding("enc.tod_emb", kSlotsPerDay, c.d_emb);
  init.embedding("enc.dow_emb", kDaysPerWeek, c.d_emb);
}

/// [T_h x N x C] -> [T_h x N x d_h].
inline Var project_traffic(Tape& t, const ParamStore& p, Var history) {
  return linear_layer(t, p, "enc.traffic", history);
}

struct TimeEmbeddings {
  Var tod, dow;  // each N x d_emb, one row per node (all equal)
};

inline TimeEmbeddings timestamp_embeddings(Tape& t, const ParamStore& p, TimePoint anchor, std::size_t nodes) {
  const std::vector<std::size_t> tod(nodes, time_of_day_slot(anchor));
  const std::vector<std::size_t> dow(nodes, day_of_week(anchor));
  return {gather_rows(t.param(p, "enc.tod_emb"), tod), gather_rows(t.param(p, "enc.dow_emb"), dow)};
}

}  // namespace igstf
