#pragma once

// Raw inputs -> graph, relation tensor, forecast instances and splits, and
// the processed artifacts that later commands read back.

#include <memory>
#include <string>
#include <vector>

#include "igstf/config.hpp"
#include "igstf/io.hpp"
#include "igstf/model.hpp"

namespace igstf {

struct BuildReport {
  std::size_t nodes = 0, edges = 0, time_steps = 0;
  std::size_t incidents = 0, incidents_aligned = 0, incidents_dropped = 0;
  std::size_t instances = 0, train = 0, val = 0, test = 0, dropped_boundary = 0;
  std::size_t train_with_incidents = 0, val_with_incidents = 0, test_with_incidents = 0;
  double adjacency_bandwidth_km = 0.0, euclidean_bandwidth_km = 0.0, road_bandwidth_km = 0.0;
};

struct Dataset {
  std::vector<SensorMeta> sensors;
  std::vector<IncidentRecord> incidents;
  std::shared_ptr<const TrafficSeries> series;
  RoadGraph graph;
  KernelBandwidths relation_bw;
  double adjacency_bw = 0.0;
  DatasetSplits splits;
  SensorVocab vocab;
  NormStats norm;
  BuildReport report;
};

namespace detail {

inline std::size_t count_with_incidents(const std::vector<ForecastInstance>& v) {
  std::size_t n = 0;
  for (const auto& i : v) n += i.incident_count() > 0;
  return n;
}

}  // namespace detail

/// Assembles the dataset. Zero bandwidths in `dc` are replaced by defaults:
/// the adjacency bandwidth from all sensor pairs, the relation bandwidths
/// from incidents inside the training share of the time axis.
inline Dataset assemble_dataset(std::vector<SensorMeta> sensors, std::vector<IncidentRecord> incidents,
                                TrafficSeries series, const DataConfig& dc, const HyperConfig& hc) {
  for (const auto& s : sensors) validate_sensor(s);
  for (const auto& e : incidents) validate_incident(e);
  require_unique_ids(sensors);
  if (series.sensor_ids.size() != sensors.size()) {
    throw IngestionError("traffic tensor has " + std::to_string(series.sensor_ids.size()) + " sensors but sensors.csv has " +
                         std::to_string(sensors.size()));
  }
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    if (series.sensor_ids[i] != sensors[i].id) {
      throw IngestionError("traffic tensor sensor " + std::to_string(i) + " is '" + series.sensor_ids[i] +
                           "' but sensors.csv row " + std::to_string(i + 1) + " is '" + sensors[i].id + "'");
    }
  }

  Dataset ds;
  ds.adjacency_bw = dc.adjacency_bandwidth_km > 0.0 ? dc.adjacency_bandwidth_km : default_adjacency_bandwidth(sensors);
  ds.graph = build_adjacency(sensors, ds.adjacency_bw, dc.adjacency_threshold);

  const TimePoint train_end =
      series.time_at(static_cast<std::size_t>(std::floor(dc.train_ratio * static_cast<double>(series.steps()))));
  std::vector<IncidentRecord> early;
  for (const auto& e : incidents)
    if (e.timestamp >= series.start && e.timestamp < train_end) early.push_back(e);
  ds.relation_bw = default_relation_bandwidths(early, sensors);
  if (dc.euclidean_bandwidth_km > 0.0) ds.relation_bw.euclidean_km = dc.euclidean_bandwidth_km;
  if (dc.road_bandwidth_km > 0.0) ds.relation_bw.road_km = dc.road_bandwidth_km;

  ds.series = std::make_shared<const TrafficSeries>(std::move(series));
  const AlignedIncidents aligned = align_incidents(incidents, *ds.series);
  const RelationTensor rel = build_relation_tensor(incidents, sensors, ds.relation_bw);
  const auto instances = make_instances(ds.series, aligned, incidents, rel, hc.T_h, hc.T_p);
  ds.splits = split_chronological(instances, {dc.train_ratio, dc.val_ratio, dc.test_ratio});

  ds.vocab = SensorVocab::discover(sensors);
  ds.norm.sensor = SensorNumericStats::fit(sensors);
  std::tie(ds.norm.flow_mean, ds.norm.flow_std) =
      fit_flow_stats(*ds.series, ds.splits.train.front().history_start(), ds.splits.train.back().target_end() + 1);

  auto& r = ds.report;
  r.nodes = sensors.size();
  r.edges = ds.graph.edge_count();
  r.time_steps = ds.series->steps();
  r.incidents = incidents.size();
  r.incidents_aligned = aligned.aligned_count();
  r.incidents_dropped = aligned.dropped;
  r.instances = instances.size();
  r.train = ds.splits.train.size();
  r.val = ds.splits.val.size();
  r.test = ds.splits.test.size();
  r.dropped_boundary = ds.splits.dropped_boundary;
  r.train_with_incidents = detail::count_with_incidents(ds.splits.train);
  r.val_with_incidents = detail::count_with_incidents(ds.splits.val);
  r.test_with_incidents = detail::count_with_incidents(ds.splits.test);
  r.adjacency_bandwidth_km = ds.adjacency_bw;
  r.euclidean_bandwidth_km = ds.relation_bw.euclidean_km;
  r.road_bandwidth_km = ds.relation_bw.road_km;

  ds.sensors = std::move(sensors);
  ds.incidents = std::move(incidents);
  return ds;
}

/// Reads sensors.csv, incidents.csv and either traffic.igstf or traffic.csv
/// (long form) from `raw`.
inline Dataset build_dataset(const fs::path& raw, const DataConfig& dc, const HyperConfig& hc) {
  auto sensors = read_sensors_csv(raw / "sensors.csv");
  auto incidents = read_incidents_csv(raw / "incidents.csv");
  std::vector<std::string> ids;
  for (const auto& s : sensors) ids.push_back(s.id);
  TrafficSeries series;
  if (fs::exists(raw / "traffic.igstf")) {
    series = read_traffic(raw / "traffic.igstf");
  } else if (fs::exists(raw / "traffic.csv")) {
    series = read_long_form_csv(raw / "traffic.csv", ids);
  } else {
    throw IoError("missing traffic input: expected " + (raw / "traffic.igstf").string() + " or traffic.csv");
  }
  return assemble_dataset(std::move(sensors), std::move(incidents), std::move(series), dc, hc);
}

inline nlohmann::json to_json(const BuildReport& r) {
  return {{"nodes", r.nodes},
          {"edges", r.edges},
          {"time_steps", r.time_steps},
          {"incidents", r.incidents},
          {"incidents_aligned", r.incidents_aligned},
          {"incidents_dropped", r.incidents_dropped},
          {"instances", r.instances},
          {"train", r.train},
          {"val", r.val},
          {"test", r.test},
          {"dropped_boundary", r.dropped_boundary},
          {"train_with_incidents", r.train_with_incidents},
          {"val_with_incidents", r.val_with_incidents},
          {"test_with_incidents", r.test_with_incidents},
          {"adjacency_bandwidth_km", r.adjacency_bandwidth_km},
          {"euclidean_bandwidth_km", r.euclidean_bandwidth_km},
          {"road_bandwidth_km", r.road_bandwidth_km}};
}

namespace detail {

inline nlohmann::json anchors(const std::vector<ForecastInstance>& v) {
  auto a = nlohmann::json::array();
  for (const auto& i : v) a.push_back(i.anchor);
  return a;
}

}  // namespace detail

/// processed/: sensors.csv, incidents.csv, tensors.bin, graph.json,
/// splits.json, build_report.json.
inline void write_processed(const fs::path& dir, const Dataset& ds) {
  ensure_directory(dir);
  write_sensors_csv(dir / "sensors.csv", ds.sensors);
  write_incidents_csv(dir / "incidents.csv", ds.incidents);
  write_traffic(dir / "tensors.bin", *ds.series);
  nlohmann::json adj = nlohmann::json::array();
  const std::size_t n = ds.graph.node_count();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = nlohmann::json::array();
    for (std::size_t j = 0; j < n; ++j) row.push_back(ds.graph.adjacency.at(i, j));
    adj.push_back(row);
  }
  nlohmann::json graph = {{"sensor_ids", ds.graph.sensor_ids},
                          {"adjacency", adj},
                          {"adjacency_bandwidth_km", ds.adjacency_bw},
                          {"euclidean_bandwidth_km", ds.relation_bw.euclidean_km},
                          {"road_bandwidth_km", ds.relation_bw.road_km}};
  write_text_file(dir / "graph.json", graph.dump(1) + "\n");
  nlohmann::json splits = {{"train", detail::anchors(ds.splits.train)},
                           {"val", detail::anchors(ds.splits.val)},
                           {"test", detail::anchors(ds.splits.test)},
                           {"dropped_boundary", ds.splits.dropped_boundary}};
  write_text_file(dir / "splits.json", splits.dump() + "\n");
  write_text_file(dir / "build_report.json", to_json(ds.report).dump(2) + "\n");
}

/// Rebuilds the dataset from processed artifacts with the recorded
/// bandwidths and checks that the splits still agree with splits.json.
inline Dataset load_processed(const fs::path& dir, const DataConfig& dc, const HyperConfig& hc) {
  for (const char* f : {"sensors.csv", "incidents.csv", "tensors.bin", "graph.json", "splits.json"}) {
    if (!fs::exists(dir / f)) throw IoError("missing processed artifact " + (dir / f).string() + " (run build)");
  }
  nlohmann::json graph, splits;
  try {
    graph = nlohmann::json::parse(read_text_file(dir / "graph.json"));
    splits = nlohmann::json::parse(read_text_file(dir / "splits.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("malformed processed JSON in " + dir.string() + ": " + e.what());
  }
  DataConfig fixed = dc;
  try {
    fixed.adjacency_bandwidth_km = graph.at("adjacency_bandwidth_km").get<double>();
    fixed.euclidean_bandwidth_km = graph.at("euclidean_bandwidth_km").get<double>();
    fixed.road_bandwidth_km = graph.at("road_bandwidth_km").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError((dir / "graph.json").string() + ": " + e.what());
  }
  Dataset ds = assemble_dataset(read_sensors_csv(dir / "sensors.csv"), read_incidents_csv(dir / "incidents.csv"),
                                read_traffic(dir / "tensors.bin"), fixed, hc);
  for (const char* part : {"train", "val", "test"}) {
    const auto& v = std::string(part) == "train" ? ds.splits.train : std::string(part) == "val" ? ds.splits.val
                                                                                                 : ds.splits.test;
    if (!splits.contains(part) || splits[part] != detail::anchors(v)) {
      throw IngestionError("processed splits do not match the current configuration (rerun build)");
    }
  }
  return ds;
}

}  // namespace igstf
