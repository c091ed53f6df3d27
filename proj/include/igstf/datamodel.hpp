#pragma once

// Road graph, sensor/incident records, the incident-sensor relation tensor,
// temporal alignment, forecast windows and chronological splits.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "igstf/errors.hpp"
#include "igstf/taxonomy.hpp"
#include "igstf/tensor.hpp"

namespace igstf {

using TimePoint = std::chrono::sys_seconds;

inline constexpr int kStepSeconds = 300;
inline constexpr std::size_t kSlotsPerDay = 86400 / kStepSeconds;  // 288
inline constexpr double kKmPerMile = 1.609344;
inline constexpr double kEarthRadiusKm = 6371.0088;

// ------------------------------------------------------------------- time

/// Parses "YYYY-MM-DDTHH:MM:SS" with an optional 'Z' or "+00:00" suffix
/// (a space may replace 'T'). Fractional seconds are truncated.
inline std::optional<TimePoint> parse_iso8601(const std::string& text) {
  int y, mo, d, h, mi, s;
  char sep;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &s, &consumed) != 7) {
    return std::nullopt;
  }
  if (sep != 'T' && sep != ' ') return std::nullopt;
  std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest[0] == '.') {
    std::size_t i = 1;
    while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) ++i;
    rest = rest.substr(i);
  }
  if (!(rest.empty() || rest == "Z" || rest == "+00:00")) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) return std::nullopt;
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

inline std::string format_iso8601(TimePoint tp) {
  using namespace std::chrono;
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

/// Five-minute slot of the day, 0..287.
inline std::size_t time_of_day_slot(TimePoint tp) {
  using namespace std::chrono;
  const auto since_midnight = tp - floor<days>(tp);
  return static_cast<std::size_t>(since_midnight.count() / kStepSeconds);
}

/// Monday = 0 ... Sunday = 6.
inline std::size_t day_of_week(TimePoint tp) {
  using namespace std::chrono;
  return weekday{floor<days>(tp)}.iso_encoding() - 1;
}

// ------------------------------------------------------------------- records

struct SensorMeta {
  std::string id;
  std::string type;         // s1
  std::string surface;      // s2
  std::string roadway_use;  // s3
  double lane_width = 3.7;  // s4, meters
  int design_speed = 105;   // s5, km/h
  double latitude = 0.0;    // s6
  double longitude = 0.0;   // s7
  std::string freeway;      // s8
  double abs_pm = 0.0;      // s9, miles
};

struct IncidentRecord {
  std::string id;
  TimePoint timestamp{};
  int relative_position = 0;  // e1, set when attached to a forecast window
  std::string description;    // e2
  std::string type;           // e3
  int holiday = 0;            // e4
  double latitude = 0.0;      // e5
  double longitude = 0.0;     // e6
  double abs_pm = 0.0;        // e7
  std::string freeway;        // e8
};

inline void validate_sensor(const SensorMeta& s) {
  if (s.id.empty()) throw IngestionError("sensor with empty id");
  if (!(s.lane_width > 0.0)) throw IngestionError("sensor " + s.id + ": lane_width must be > 0");
  if (s.design_speed <= 0) throw IngestionError("sensor " + s.id + ": design_speed must be > 0");
  if (s.latitude < -90.0 || s.latitude > 90.0 || s.longitude < -180.0 || s.longitude > 180.0) {
    throw IngestionError("sensor " + s.id + ": coordinates out of range");
  }
  if (!(s.abs_pm >= 0.0)) throw IngestionError("sensor " + s.id + ": abs_pm must be >= 0");
}

inline void validate_incident(const IncidentRecord& e) {
  if (!incident_type_index(e.type)) {
    throw IngestionError("incident " + e.id + ": unknown type '" + e.type + "'");
  }
  if (!incident_description_index(e.description)) {
    throw IngestionError("incident " + e.id + ": unknown description '" + e.description + "'");
  }
  if (e.holiday != 0 && e.holiday != 1) throw IngestionError("incident " + e.id + ": holiday must be 0 or 1");
  if (e.latitude < -90.0 || e.latitude > 90.0 || e.longitude < -180.0 || e.longitude > 180.0) {
    throw IngestionError("incident " + e.id + ": coordinates out of range");
  }
}

/// Ordered categorical vocabulary; the position of a value is its embedding row.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> items) : items_(std::move(items)) {}

  // Distinct values in sorted order.
  static Vocabulary discover(const std::vector<std::string>& values) {
    std::set<std::string> uniq(values.begin(), values.end());
    return Vocabulary({uniq.begin(), uniq.end()});
  }

  std::size_t index(const std::string& value, const char* what = "value") const {
    auto it = std::find(items_.begin(), items_.end(), value);
    if (it == items_.end()) {
      throw EncodingError(std::string("out-of-vocabulary ") + what + " '" + value + "'");
    }
    return static_cast<std::size_t>(it - items_.begin());
  }

  std::size_t size() const { return items_.size(); }
  const std::vector<std::string>& items() const { return items_; }

 private:
  std::vector<std::string> items_;
};

struct SensorVocab {
  Vocabulary type, surface, roadway_use;

  static SensorVocab discover(const std::vector<SensorMeta>& sensors) {
    std::vector<std::string> t, s, u;
    for (const auto& m : sensors) {
      t.push_back(m.type);
      s.push_back(m.surface);
      u.push_back(m.roadway_use);
    }
    return {Vocabulary::discover(t), Vocabulary::discover(s), Vocabulary::discover(u)};
  }
};

// ------------------------------------------------------------------- geometry

inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

// Along-road distance from postmiles; only meaningful on a shared freeway.
inline double postmile_distance_km(double pm_a, double pm_b) { return std::abs(pm_a - pm_b) * kKmPerMile; }

inline double gaussian_kernel(double distance, double bandwidth) {
  return std::exp(-(distance * distance) / (bandwidth * bandwidth));
}

inline double population_stddev(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

// ------------------------------------------------------------------- road graph

struct RoadGraph {
  std::vector<std::string> sensor_ids;
  Tensor adjacency;  // N x N, symmetric, zero diagonal, weights in [0, 1]

  std::size_t node_count() const { return sensor_ids.size(); }

  // Undirected edges with nonzero weight.
  std::size_t edge_count() const {
    std::size_t e = 0;
    const std::size_t n = node_count();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (adjacency.at(i, j) > 0.0) ++e;
    return e;
  }

  /// Row-normalized copy; all-zero rows stay zero.
  Tensor row_normalized() const {
    Tensor out = adjacency;
    const std::size_t n = node_count();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += out.at(i, j);
      if (s > 0.0)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= s;
    }
    return out;
  }
};

inline void require_unique_ids(const std::vector<SensorMeta>& sensors) {
  std::set<std::string> seen;
  for (const auto& s : sensors)
    if (!seen.insert(s.id).second) throw IngestionError("duplicate sensor id '" + s.id + "'");
}

/// Standard deviation of along-road distances between sensors that share a freeway.
inline double default_adjacency_bandwidth(const std::vector<SensorMeta>& sensors) {
  std::vector<double> d;
  for (std::size_t i = 0; i < sensors.size(); ++i)
    for (std::size_t j = i + 1; j < sensors.size(); ++j)
      if (sensors[i].freeway == sensors[j].freeway)
        d.push_back(postmile_distance_km(sensors[i].abs_pm, sensors[j].abs_pm));
  const double sd = population_stddev(d);
  return sd > 0.0 ? sd : 1.0;
}

/// Gaussian-kernel adjacency over along-road distance. Pairs on different
/// freeways, and weights not above `threshold`, are 0.
inline RoadGraph build_adjacency(const std::vector<SensorMeta>& sensors, double bandwidth_km,
                                 double threshold = 0.1) {
  if (sensors.size() < 2) throw ConfigError("build_adjacency needs at least 2 sensors");
  if (!(bandwidth_km > 0.0)) throw ConfigError("adjacency bandwidth must be > 0");
  if (!(threshold >= 0.0 && threshold < 1.0)) throw ConfigError("adjacency threshold must lie in [0, 1)");
  require_unique_ids(sensors);
  const std::size_t n = sensors.size();
  RoadGraph g;
  g.adjacency = Tensor({n, n}, 0.0);
  for (const auto& s : sensors) g.sensor_ids.push_back(s.id);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sensors[i].freeway != sensors[j].freeway) continue;
      const double w = gaussian_kernel(postmile_distance_km(sensors[i].abs_pm, sensors[j].abs_pm), bandwidth_km);
      if (w > threshold) g.adjacency.at(i, j) = g.adjacency.at(j, i) = w;
    }
  }
  return g;
}

// ------------------------------------------------------------------- relation tensor

struct RelationTensor {
  static constexpr std::size_t kEuclidean = 0;
  static constexpr std::size_t kRoad = 1;
  static constexpr std::size_t kUpstream = 2;

  Tensor d;  // M x N x 3

  std::size_t incidents() const { return d.rank() ? d.dim(0) : 0; }
  std::size_t sensors() const { return d.rank() ? d.dim(1) : 0; }

  /// Rows for the given incidents, in the given order.
  RelationTensor select(const std::vector<std::size_t>& rows) const {
    const std::size_t n = sensors();
    RelationTensor out{Tensor({rows.size(), n, 3})};
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy_n(d.ptr() + rows[r] * n * 3, n * 3, out.d.ptr() + r * n * 3);
    return out;
  }

  /// Binary M x N connectivity: road score >= kappa.
  Tensor connectivity(double kappa) const {
    const std::size_t m = incidents(), n = sensors();
    Tensor c({m, n});
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t j = 0; j < n; ++j) c.at(k, j) = d.at(k, j, kRoad) >= kappa ? 1.0 : 0.0;
    return c;
  }
};

struct KernelBandwidths {
  double euclidean_km = 1.0;
  double road_km = 1.0;
};

/// Standard deviation of incident-sensor distances (haversine, and postmile
/// distance for same-freeway pairs). Degenerate sets fall back to 1 km.
inline KernelBandwidths default_relation_bandwidths(const std::vector<IncidentRecord>& incidents,
                                                    const std::vector<SensorMeta>& sensors) {
  std::vector<double> euc, road;
  for (const auto& e : incidents) {
    for (const auto& s : sensors) {
      euc.push_back(haversine_km(e.latitude, e.longitude, s.latitude, s.longitude));
      if (e.freeway == s.freeway) road.push_back(postmile_distance_km(e.abs_pm, s.abs_pm));
    }
  }
  KernelBandwidths bw;
  const double se = population_stddev(euc), sr = population_stddev(road);
  bw.euclidean_km = se > 0.0 ? se : 1.0;
  bw.road_km = sr > 0.0 ? sr : 1.0;
  return bw;
}

inline RelationTensor build_relation_tensor(const std::vector<IncidentRecord>& incidents,
                                            const std::vector<SensorMeta>& sensors, KernelBandwidths bw) {
  if (!(bw.euclidean_km > 0.0) || !(bw.road_km > 0.0)) throw ConfigError("kernel bandwidths must be > 0");
  const std::size_t m = incidents.size(), n = sensors.size();
  RelationTensor rt{Tensor({m, n, 3})};
  for (std::size_t k = 0; k < m; ++k) {
    const auto& e = incidents[k];
    for (std::size_t j = 0; j < n; ++j) {
      const auto& s = sensors[j];
      rt.d.at(k, j, RelationTensor::kEuclidean) =
          gaussian_kernel(haversine_km(e.latitude, e.longitude, s.latitude, s.longitude), bw.euclidean_km);
      rt.d.at(k, j, RelationTensor::kRoad) =
          e.freeway == s.freeway ? gaussian_kernel(postmile_distance_km(e.abs_pm, s.abs_pm), bw.road_km) : 0.0;
      rt.d.at(k, j, RelationTensor::kUpstream) = e.abs_pm > s.abs_pm ? 1.0 : 0.0;
    }
  }
  return rt;
}

// ------------------------------------------------------------------- traffic series

inline constexpr std::size_t kFlowChannel = 0;
inline constexpr std::size_t kTimeOfDayChannel = 1;
inline constexpr std::size_t kDayOfWeekChannel = 2;
inline constexpr std::size_t kTrafficChannels = 3;

/// T x N x 3 tensor: [flow, time-of-day fraction, day-of-week]. Missing flow is NaN.
struct TrafficSeries {
  Tensor x;
  TimePoint start{};
  int step_seconds = kStepSeconds;
  std::vector<std::string> sensor_ids;

  std::size_t steps() const { return x.rank() ? x.dim(0) : 0; }
  std::size_t nodes() const { return x.rank() ? x.dim(1) : 0; }
  TimePoint time_at(std::size_t t) const { return start + std::chrono::seconds{static_cast<long>(t) * step_seconds}; }
  double flow(std::size_t t, std::size_t n) const { return x.at(t, n, kFlowChannel); }
  bool missing(std::size_t t, std::size_t n) const { return std::isnan(flow(t, n)); }

  /// Adds the time-of-day and day-of-week channels to a T x N flow matrix.
  static TrafficSeries from_flow(const Tensor& flow, TimePoint start, std::vector<std::string> ids) {
    if (flow.rank() != 2 || flow.dim(1) != ids.size()) {
      throw DimensionError("flow matrix " + shape_str(flow.shape()) + " does not match " +
                           std::to_string(ids.size()) + " sensor ids");
    }
    const std::size_t t_len = flow.dim(0), n = flow.dim(1);
    TrafficSeries s;
    s.start = start;
    s.sensor_ids = std::move(ids);
    s.x = Tensor({t_len, n, kTrafficChannels});
    for (std::size_t t = 0; t < t_len; ++t) {
      const TimePoint tp = s.time_at(t);
      const double tod = static_cast<double>(time_of_day_slot(tp)) / static_cast<double>(kSlotsPerDay);
      const double dow = static_cast<double>(day_of_week(tp));
      for (std::size_t i = 0; i < n; ++i) {
        s.x.at(t, i, kFlowChannel) = flow.at(t, i);
        s.x.at(t, i, kTimeOfDayChannel) = tod;
        s.x.at(t, i, kDayOfWeekChannel) = dow;
      }
    }
    return s;
  }
};

// ------------------------------------------------------------------- alignment

struct AlignedIncidents {
  std::map<std::size_t, std::vector<std::size_t>> by_window;  // window -> incident indices
  std::size_t dropped = 0;                                     // outside [start, end)

  std::size_t aligned_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : by_window) n += v.size();
    return n;
  }
};

/// window = floor((timestamp - start) / 300 s); out-of-range incidents are counted and dropped.
inline AlignedIncidents align_incidents(const std::vector<IncidentRecord>& incidents, const TrafficSeries& series) {
  if (series.step_seconds != kStepSeconds) throw ConfigError("traffic series step must be 300 s");
  AlignedIncidents out;
  const long span = static_cast<long>(series.steps()) * series.step_seconds;
  for (std::size_t k = 0; k < incidents.size(); ++k) {
    const long offset = (incidents[k].timestamp - series.start).count();
    if (offset < 0 || offset >= span) {
      ++out.dropped;
      continue;
    }
    out.by_window[static_cast<std::size_t>(offset / series.step_seconds)].push_back(k);
  }
  return out;
}

// ------------------------------------------------------------------- instances

/// One forecast sample anchored at history step `anchor` (the paper's t).
/// History and target are sliced from the shared series on demand.
struct ForecastInstance {
  std::shared_ptr<const TrafficSeries> series;
  std::size_t anchor = 0;
  std::size_t history_len = 12;
  std::size_t horizon = 12;
  TimePoint anchor_time{};
  std::vector<std::size_t> incident_ids;     // indices into the full incident list
  std::vector<IncidentRecord> incidents;     // copies with e1 = history_len - 1
  RelationTensor relation;                   // M x N x 3 slice for `incidents`

  std::size_t incident_count() const { return incidents.size(); }

  /// T_h x N x C.
  Tensor history() const {
    const std::size_t n = series->nodes(), c = series->x.dim(2);
    Tensor h({history_len, n, c});
    const std::size_t first = anchor + 1 - history_len;
    std::copy_n(series->x.ptr() + first * n * c, history_len * n * c, h.ptr());
    return h;
  }

  /// T_p x N x 1 flow (NaN where missing).
  Tensor target() const {
    const std::size_t n = series->nodes();
    Tensor y({horizon, n, 1});
    for (std::size_t s = 0; s < horizon; ++s)
      for (std::size_t i = 0; i < n; ++i) y.at(s, i, 0) = series->flow(anchor + 1 + s, i);
    return y;
  }

  /// 1 where the target is observed, 0 where missing.
  Tensor target_mask() const {
    Tensor y = target();
    for (double& v : y.storage()) v = std::isnan(v) ? 0.0 : 1.0;
    return y;
  }

  std::size_t history_start() const { return anchor + 1 - history_len; }
  std::size_t target_end() const { return anchor + horizon; }  // inclusive
};

/// One instance per anchor t in [T_h - 1, T - T_p - 1], carrying the incidents
/// aligned to window t (M may be 0).
inline std::vector<ForecastInstance> make_instances(std::shared_ptr<const TrafficSeries> series,
                                                    const AlignedIncidents& aligned,
                                                    const std::vector<IncidentRecord>& incidents,
                                                    const RelationTensor& relation_full,
                                                    std::size_t history_len = 12, std::size_t horizon = 12) {
  if (history_len == 0 || horizon == 0) throw ConfigError("history and horizon lengths must be >= 1");
  const std::size_t t_len = series->steps();
  if (t_len < history_len + horizon) {
    throw ConfigError("series of " + std::to_string(t_len) + " steps is shorter than T_h + T_p");
  }
  std::vector<ForecastInstance> out;
  out.reserve(t_len - history_len - horizon + 1);
  for (std::size_t t = history_len - 1; t + horizon < t_len; ++t) {
    ForecastInstance inst;
    inst.series = series;
    inst.anchor = t;
    inst.history_len = history_len;
    inst.horizon = horizon;
    inst.anchor_time = series->time_at(t);
    if (auto it = aligned.by_window.find(t); it != aligned.by_window.end()) {
      inst.incident_ids = it->second;
      for (std::size_t k : it->second) {
        IncidentRecord e = incidents[k];
        e.relative_position = static_cast<int>(history_len - 1);
        inst.incidents.push_back(std::move(e));
      }
    }
    inst.relation = relation_full.select(inst.incident_ids);
    out.push_back(std::move(inst));
  }
  return out;
}

// ------------------------------------------------------------------- splits

struct SplitRatios {
  double train = 0.70, val = 0.15, test = 0.15;
};

struct DatasetSplits {
  std::vector<ForecastInstance> train, val, test;
  std::size_t dropped_boundary = 0;
};

/// Contiguous chronological partition. Instances of an earlier split whose
/// target window reaches into the first history window of the next split
/// are dropped and counted.
inline DatasetSplits split_chronological(const std::vector<ForecastInstance>& instances, SplitRatios r = {}) {
  if (!(r.train > 0.0 && r.val > 0.0 && r.test > 0.0) || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  for (std::size_t i = 1; i < instances.size(); ++i) {
    if (instances[i].anchor <= instances[i - 1].anchor) throw ConfigError("instances are not time-ordered");
  }
  const std::size_t n = instances.size();
  const auto part = [n](double ratio) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))));
  };
  const std::size_t n_val = part(r.val), n_test = part(r.test);
  if (n < 3 || n_val + n_test >= n) {
    throw ConfigError("too few instances (" + std::to_string(n) + ") for three nonempty splits");
  }
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplits s;
  s.train.assign(instances.begin(), instances.begin() + static_cast<long>(n_train));
  s.val.assign(instances.begin() + static_cast<long>(n_train),
               instances.begin() + static_cast<long>(n_train + n_val));
  s.test.assign(instances.begin() + static_cast<long>(n_train + n_val), instances.end());

  const auto trim = [&s](std::vector<ForecastInstance>& earlier, const std::vector<ForecastInstance>& later) {
    const std::size_t boundary = later.front().history_start();
    while (!earlier.empty() && earlier.back().target_end() >= boundary) {
      earlier.pop_back();
      ++s.dropped_boundary;
    }
  };
  trim(s.val, s.test);
  if (s.val.empty()) throw ConfigError("validation split is empty after boundary dropping");
  trim(s.train, s.val);
  if (s.train.empty()) throw ConfigError("training split is empty after boundary dropping");
  return s;
}

}  // namespace igstf
