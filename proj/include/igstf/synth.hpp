#pragma once

// Seeded synthetic corridor: a daily/weekly base flow on a straight freeway
// with incidents that cut flow around their location and recover linearly.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "igstf/config.hpp"
#include "igstf/io.hpp"
#include "igstf/rng.hpp"
#include "igstf/taxonomy.hpp"

namespace igstf {

inline constexpr double kDegreesLatPerKm = 1.0 / 111.195;  // mean meridian degree

/// One incident's contribution to one sensor at one step.
struct ImpactRecord {
  std::string incident_id;
  std::size_t step = 0;
  std::size_t node = 0;
  double reduction = 0.0;  // fraction of base flow removed
};

struct SynthDataset {
  std::vector<SensorMeta> sensors;
  std::vector<IncidentRecord> incidents;
  TrafficSeries series;
  Tensor base;                       // T x N noise-free, incident-free flow
  Tensor impact;                     // T x N total reduction fraction (before clamping)
  std::vector<std::size_t> onsets;   // onset step of each incident
  std::vector<ImpactRecord> impacts; // nonzero per-incident contributions
};

/// Base flow at a step: A (1 + depth sin(2 pi tod - pi/2)) times the weekend
/// factor on Saturdays and Sundays. Lowest at midnight, highest at noon.
inline double synth_base_flow(const SynthConfig& c, TimePoint t) {
  const double tod = static_cast<double>(time_of_day_slot(t)) / static_cast<double>(kSlotsPerDay);
  const double daily = 1.0 + c.daily_depth * std::sin(2.0 * std::numbers::pi * tod - std::numbers::pi / 2.0);
  return c.base_flow * daily * (day_of_week(t) >= 5 ? c.weekend_factor : 1.0);
}

/// Linear recovery: 1 at onset, 1 - k/R after k steps, 0 from step R on.
inline double synth_recovery(long elapsed, std::size_t recovery_steps) {
  if (elapsed < 0 || elapsed >= static_cast<long>(recovery_steps)) return 0.0;
  return 1.0 - static_cast<double>(elapsed) / static_cast<double>(recovery_steps);
}

/// Sensors at or before the incident postmile take the full impact.
inline double synth_gate(double sensor_pm, double incident_pm, double downstream_gate) {
  return sensor_pm <= incident_pm ? 1.0 : downstream_gate;
}

inline double synth_spatial(double sensor_pm, double incident_pm, double spread_km) {
  const double d = postmile_distance_km(sensor_pm, incident_pm);
  return std::exp(-(d * d) / (spread_km * spread_km));
}

inline SynthDataset generate_synthetic(const SynthConfig& c) {
  const auto start = parse_iso8601(c.start);
  if (!start) throw ConfigError("data.synth.start is not an ISO-8601 time: '" + c.start + "'");
  Rng meta_rng(derive_seed(c.seed, 11)), inc_rng(derive_seed(c.seed, 12)), noise_rng(derive_seed(c.seed, 13));
  const double km_per_mile = kKmPerMile;
  SynthDataset ds;

  static constexpr const char* kSurfaces[] = {"Asphalt", "Concrete"};
  static constexpr const char* kUses[] = {"Urban", "Suburban"};
  for (std::size_t i = 0; i < c.nodes; ++i) {
    SensorMeta s;
    s.id = "S" + std::to_string(400000 + i);
    s.type = i % 5 == 4 ? "Ramp" : "Mainline";
    s.surface = kSurfaces[meta_rng.below(2)];
    s.roadway_use = kUses[meta_rng.below(2)];
    s.lane_width = 3.5 + 0.1 * static_cast<double>(meta_rng.below(4));
    s.design_speed = meta_rng.below(2) ? 110 : 100;
    s.freeway = c.freeway;
    s.abs_pm = static_cast<double>(i);
    s.latitude = c.origin_lat + s.abs_pm * km_per_mile * kDegreesLatPerKm;
    s.longitude = c.origin_lon;
    ds.sensors.push_back(s);
  }

  const std::size_t steps = c.days * kSlotsPerDay;
  const auto n_inc = static_cast<std::size_t>(std::llround(c.incidents_per_day * static_cast<double>(c.days)));
  const double max_pm = static_cast<double>(c.nodes - 1);
  std::vector<std::pair<std::size_t, IncidentRecord>> drawn;
  for (std::size_t k = 0; k < n_inc; ++k) {
    IncidentRecord e;
    const std::size_t onset = inc_rng.below(steps);
    e.timestamp = *start + std::chrono::seconds{static_cast<long>(onset) * kStepSeconds +
                                                static_cast<long>(inc_rng.below(kStepSeconds))};
    const std::size_t type = inc_rng.below(kIncidentTypes.size());
    e.type = std::string(kIncidentTypes[type]);
    e.description = std::string(kIncidentDescriptions[type * kDescriptionsPerType +
                                                      inc_rng.below(kDescriptionsPerType)]);
    e.holiday = 0;
    e.freeway = c.freeway;
    e.abs_pm = std::round(inc_rng.uniform(0.0, max_pm) * 100.0) / 100.0;
    e.latitude = c.origin_lat + e.abs_pm * km_per_mile * kDegreesLatPerKm;
    e.longitude = c.origin_lon;
    drawn.emplace_back(onset, e);
  }
  std::stable_sort(drawn.begin(), drawn.end(),
                   [](const auto& a, const auto& b) { return a.second.timestamp < b.second.timestamp; });
  for (std::size_t k = 0; k < drawn.size(); ++k) {
    drawn[k].second.id = "E" + std::to_string(k + 1);
    ds.onsets.push_back(drawn[k].first);
    ds.incidents.push_back(drawn[k].second);
  }

  ds.base = Tensor({steps, c.nodes});
  ds.impact = Tensor({steps, c.nodes});
  for (std::size_t t = 0; t < steps; ++t) {
    const double b = synth_base_flow(c, *start + std::chrono::seconds{static_cast<long>(t) * kStepSeconds});
    for (std::size_t i = 0; i < c.nodes; ++i) ds.base.at(t, i) = b;
  }
  for (std::size_t k = 0; k < ds.incidents.size(); ++k) {
    const auto& e = ds.incidents[k];
    for (std::size_t t = ds.onsets[k]; t < std::min(steps, ds.onsets[k] + c.recovery_steps); ++t) {
      const double ramp = synth_recovery(static_cast<long>(t - ds.onsets[k]), c.recovery_steps);
      for (std::size_t i = 0; i < c.nodes; ++i) {
        const double pm = ds.sensors[i].abs_pm;
        const double r = c.impact_peak * synth_spatial(pm, e.abs_pm, c.spatial_spread_km) * ramp *
                         synth_gate(pm, e.abs_pm, c.downstream_gate);
        ds.impact.at(t, i) += r;
        if (r >= 1e-4) ds.impacts.push_back({e.id, t, i, r});
      }
    }
  }

  Tensor flow({steps, c.nodes});
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < c.nodes; ++i) {
      const double clean = ds.base.at(t, i) * (1.0 - ds.impact.at(t, i));
      const double noise = c.noise_std > 0.0 ? noise_rng.normal(0.0, c.noise_std * c.base_flow) : 0.0;
      flow.at(t, i) = std::max(0.0, clean + noise);
    }
  std::vector<std::string> ids;
  for (const auto& s : ds.sensors) ids.push_back(s.id);
  ds.series = TrafficSeries::from_flow(flow, *start, ids);
  return ds;
}

/// Writes sensors.csv, incidents.csv, traffic.igstf and truth_impacts.csv.
inline void write_synthetic(const fs::path& dir, const SynthDataset& ds) {
  ensure_directory(dir);
  write_sensors_csv(dir / "sensors.csv", ds.sensors);
  write_incidents_csv(dir / "incidents.csv", ds.incidents);
  write_traffic(dir / "traffic.igstf", ds.series, true);
  std::string out = "incident_id,timestamp,sensor_id,reduction\n";
  for (const auto& r : ds.impacts) {
    out += r.incident_id + "," + format_iso8601(ds.series.time_at(r.step)) + "," + ds.sensors[r.node].id + "," +
           detail::fmt_double(r.reduction) + "\n";
  }
  write_text_file(dir / "truth_impacts.csv", out);
}

}  // namespace igstf
